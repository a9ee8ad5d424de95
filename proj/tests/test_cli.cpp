#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "ecm/kernel.hpp"
#include "ecm/machine.hpp"
#include "ecm/scaling.hpp"

namespace {

struct RunResult {
  int code = -1;
  std::string out;
};

// Runs a shell command, captures stdout (stderr merged on request).
RunResult run_cmd(const std::string& cmd) {
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::string out;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) out.append(buf, n);
  int st = pclose(p);
  return {WIFEXITED(st) ? WEXITSTATUS(st) : -1, out};
}

RunResult ecm_cli(const std::string& args, bool merge_stderr = false) {
  return run_cmd(std::string(ECM_CLI_PATH) + " " + args +
                 (merge_stderr ? " 2>&1" : " 2>/dev/null"));
}

bool has(const RunResult& r, const std::string& needle) {
  return r.out.find(needle) != std::string::npos;
}

std::filesystem::path scratch_dir() {
  auto dir = std::filesystem::temp_directory_path() /
             ("ecm_cli_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  return dir;
}

std::string write_file(const std::filesystem::path& p,
                       const std::string& text) {
  std::ofstream out(p);
  out << text;
  return p.string();
}

std::string samples(const char* rel) {
  return std::string(ECM_SAMPLES_DIR) + "/" + rel;
}

}  // namespace

TEST_CASE("cli: machines") {
  RunResult r = ecm_cli("machines");
  CHECK(r.code == 0);
  CHECK(has(r, "name freq_ghz domains cores_per_domain total_cores"));
  CHECK(has(r, "skl 2.2 2 10 20"));
  CHECK(has(r, "epyc"));
  CHECK(has(r, "tx2"));
  CHECK(has(r, "pwr9 3.1 1 22 22"));

  RunResult csv = ecm_cli("machines --format csv");
  CHECK(csv.code == 0);
  CHECK(has(csv, "name,frequency_ghz,numa_domains,cores_per_domain"));
  CHECK(has(csv, "skl,2.2,2,10"));
}

TEST_CASE("cli: predict breakdown") {
  RunResult r = ecm_cli("predict --machine skl --kernel daxpby");
  CHECK(r.code == 0);
  CHECK(has(r, "machine skl  kernel daxpby  data in Mem"));
  CHECK(has(r, "comp 0.0625 cy/it"));
  CHECK(has(r, "regl1 0.1875 cy/it"));
  CHECK(has(r, "l1l2 0.375 cy/it  (16 B down, 8 B up)"));
  CHECK(has(r, "T_Mem 2.4425 cy/it"));

  RunResult l1 = ecm_cli(
      "predict --machine skl --kernel stream_triad --residence l1");
  CHECK(l1.code == 0);
  CHECK(has(l1, "data in L1"));
  CHECK(has(l1, "T_L1 0.1875 cy/it"));

  RunResult pen = ecm_cli("predict --machine pwr9 --kernel daxpby");
  CHECK(pen.code == 0);
  CHECK(has(pen, ", penalty 0.32 cy)"));

  RunResult csv = ecm_cli("predict --machine skl --kernel daxpby "
                          "--format csv");
  CHECK(csv.code == 0);
  CHECK(has(csv, "component,cycles_per_it\n"));
  CHECK(has(csv, "l2l3,1\n"));
  CHECK(has(csv, "T_Mem,2.4425\n"));

  // same invocation, same bytes
  RunResult again = ecm_cli("predict --machine skl --kernel daxpby "
                            "--format csv");
  CHECK(csv.out == again.out);
}

TEST_CASE("cli: scale curve") {
  RunResult r = ecm_cli("scale --machine skl --kernel daxpby --cores 1..4");
  CHECK(r.code == 0);
  CHECK(has(r, "cores u t_cy_per_it perf_git_s saturated"));
  CHECK(has(r, "saturation at 3 cores"));
  CHECK(has(r, "\n3 1 "));  // saturated point has u = 1

  RunResult csv = ecm_cli(
      "scale --machine skl --kernel daxpby --cores 2,5,7 --format csv");
  CHECK(csv.code == 0);
  CHECK(csv.out.rfind("cores,u,perf_git_s\n", 0) == 0);
  CHECK(has(csv, "\n2,"));
  CHECK(has(csv, "\n5,"));
  CHECK(has(csv, "\n7,"));

  RunResult spread = ecm_cli(
      "scale --machine skl --kernel daxpby --cores 4 --placement spread "
      "--p0 10");
  CHECK(spread.code == 0);

  RunResult bad = ecm_cli("scale --machine skl --kernel daxpby --cores 25",
                          true);
  CHECK(bad.code == 1);
  CHECK(has(bad, "error:"));
}

TEST_CASE("cli: scale with barrier and traffic files") {
  RunResult bar = ecm_cli("scale --machine skl --kernel gs_fwd --cores 4 "
                          "--barrier " + samples("barrier.csv"));
  CHECK(bar.code == 0);

  RunResult tr = ecm_cli("scale --machine skl --kernel daxpby --cores 2 "
                         "--traffic " + samples("traffic_override.csv"));
  CHECK(tr.code == 0);

  RunResult pr = ecm_cli("predict --machine skl --kernel daxpby --traffic " +
                         samples("traffic_override.csv") + " --format csv");
  CHECK(pr.code == 0);
  CHECK(has(pr, "l3mem,2.34667\n"));  // 48+16 B over 60/2.2 B/cy
}

TEST_CASE("cli: fit and compare round-trip on generated data") {
  // model output written at full precision behaves like a perfect
  // measurement: zero error, zero fitted conflict
  auto dir = scratch_dir();
  std::string csv = "cores,performance_it_per_s\n";
  ecm::KernelModel k = ecm::builtin_kernel("daxpby");
  ecm::MachineModel m = ecm::builtin_machine("skl");
  for (int n : {1, 2, 3, 6}) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g",
                  ecm::predict_scaling_point(k, m, n).it_per_second);
    csv += std::to_string(n) + "," + buf + "\n";
  }
  std::string path = write_file(dir / "measured.csv", csv);

  RunResult fit = ecm_cli("fit-p0 --machine skl --kernel daxpby --measured " +
                          path);
  CHECK(fit.code == 0);
  CHECK(fit.out == "p0 0\nobjective 0\n");

  RunResult fit_csv = ecm_cli(
      "fit-p0 --machine skl --kernel daxpby --format csv --measured " + path);
  CHECK(fit_csv.out == "p0,objective\n0,0\n");

  RunResult cmp = ecm_cli("compare --machine skl --kernel daxpby --measured " +
                          path);
  CHECK(cmp.code == 0);
  CHECK(has(cmp, "cores measured predicted rel_err"));
  CHECK(has(cmp, "mean_rel_err 0\n"));
  CHECK(has(cmp, "max_rel_err 0\n"));

  RunResult cmp_csv = ecm_cli("compare --machine skl --kernel daxpby "
                              "--format csv --measured " + path);
  CHECK(has(cmp_csv, "cores,measured_it_per_s,predicted_it_per_s,rel_err"));
}

TEST_CASE("cli: infer link parameters") {
  std::string measured = samples("residence_cycles.csv");
  RunResult r = ecm_cli("infer --machine skl --kernel stream_triad "
                        "--link l1l2 --bandwidths 16,32,64 --measured " +
                        measured);
  CHECK(r.code == 0);
  CHECK(has(r, "rank link bandwidth_b_cy overlap score"));
  CHECK(has(r, "1 l1l2 64 no-overlap 0\n"));

  RunResult l23 = ecm_cli("infer --machine skl --kernel stream_triad "
                          "--link l2l3 --bandwidths 16,32,64 --measured " +
                          measured + " --format csv");
  CHECK(l23.code == 0);
  CHECK(l23.out.rfind("rank,link,bandwidth_b_cy,overlap,score\n", 0) == 0);
  CHECK(has(l23, "1,l2l3,32,no-overlap,0\n"));

  RunResult bad = ecm_cli("infer --machine skl --kernel stream_triad "
                          "--bandwidths 16,oops --measured " + measured,
                          true);
  CHECK(bad.code == 1);
  CHECK(has(bad, "error:"));
}

TEST_CASE("cli: compose") {
  RunResult r = ecm_cli("compose --machine skl --pcg --cores 1");
  CHECK(r.code == 0);
  CHECK(has(r, "cores 1"));
  CHECK(has(r, "  stencil5 x1"));
  CHECK(has(r, "  daxpby x3"));
  CHECK(has(r, "  norm x1"));
  CHECK(has(r, "  total "));
  CHECK(has(r, " solver it/s)"));

  RunResult lean = ecm_cli("compose --machine skl --pcg --no-norm --cores 1");
  CHECK(lean.code == 0);
  CHECK_FALSE(has(lean, "norm"));

  RunResult csv = ecm_cli(
      "compose --machine skl --pcg --cores 1..3 --format csv");
  CHECK(csv.code == 0);
  CHECK(csv.out.rfind("cores,seconds_per_iteration,solver_it_per_s\n", 0) ==
        0);

  RunResult file = ecm_cli("compose --machine skl --composite " +
                           samples("composite_pcg.yaml") + " --cores 2");
  CHECK(file.code == 0);
  CHECK(has(file, "cores 2"));

  RunResult none = ecm_cli("compose --machine skl --cores 1", true);
  CHECK(none.code == 1);
  CHECK(has(none, "error: compose needs --composite FILE or --pcg"));
}

TEST_CASE("cli: models load from files and the search path") {
  RunResult file = ecm_cli("predict --machine " +
                           samples("machines/demo.yaml") +
                           " --kernel daxpby");
  CHECK(file.code == 0);
  CHECK(has(file, "machine demo"));

  RunResult named = run_cmd("ECM_MODEL_PATH=" + samples("machines") + " " +
                            ECM_CLI_PATH +
                            " predict --machine demo --kernel daxpby "
                            "2>/dev/null");
  CHECK(named.code == 0);
  CHECK(has(named, "machine demo"));

  RunResult kfile = ecm_cli("predict --machine skl --kernel " +
                            samples("kernels/smoother.yaml"));
  CHECK(kfile.code == 0);
  CHECK(has(kfile, "kernel smoother"));

  // presets win over the search path
  RunResult preset = run_cmd("ECM_MODEL_PATH=" + samples("machines") + " " +
                             ECM_CLI_PATH +
                             " predict --machine skl --kernel daxpby "
                             "2>/dev/null");
  CHECK(has(preset, "machine skl"));
}

TEST_CASE("cli: exit codes") {
  CHECK(ecm_cli("").code == 2);                      // subcommand required
  CHECK(ecm_cli("predict --machine skl", true).code == 2);  // missing kernel
  CHECK(ecm_cli("predict --machine skl --kernel daxpby --format weird",
                true).code == 2);
  CHECK(ecm_cli("scale --machine skl --kernel daxpby --placement wild",
                true).code == 2);
  CHECK(ecm_cli("frobnicate", true).code == 2);

  RunResult missing = ecm_cli("predict --machine nope --kernel daxpby",
                              true);
  CHECK(missing.code == 1);
  CHECK(has(missing, "error: cannot open file: nope"));

  RunResult help = ecm_cli("--help");
  CHECK(help.code == 0);
  CHECK(has(help, "predict"));
  CHECK(has(help, "scale"));
  CHECK(has(help, "compose"));
}
