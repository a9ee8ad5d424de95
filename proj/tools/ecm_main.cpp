// ecm: analytic runtime and scaling predictions for streaming loop
// kernels on cache-hierarchy machine models.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ecm/compose.hpp"
#include "ecm/csv.hpp"
#include "ecm/kernel.hpp"
#include "ecm/machine.hpp"
#include "ecm/predictor.hpp"
#include "ecm/report.hpp"
#include "ecm/scaling.hpp"
#include "ecm/traffic.hpp"

namespace {

using ecm::report::Format;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ecm::ConfigError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool looks_like_path(const std::string& name) {
  return name.find('/') != std::string::npos ||
         name.find('\\') != std::string::npos;
}

// Preset names win unless the argument is an explicit path; the search
// path from ECM_MODEL_PATH lets users add their own named models.
std::optional<std::string> search_model_dir(const std::string& name) {
  const char* dir = std::getenv("ECM_MODEL_PATH");
  if (!dir || !*dir) return std::nullopt;
  for (const char* ext : {".yaml", ".yml", ""}) {
    std::string candidate = std::string(dir) + "/" + name + ext;
    if (std::ifstream(candidate).good()) return candidate;
  }
  return std::nullopt;
}

ecm::MachineModel resolve_machine(const std::string& arg) {
  if (!looks_like_path(arg)) {
    for (const auto& name : ecm::builtin_machine_names())
      if (name == arg) return ecm::builtin_machine(arg);
    if (auto path = search_model_dir(arg))
      return ecm::parse_machine(read_file(*path));
  }
  return ecm::parse_machine(read_file(arg));
}

ecm::KernelModel resolve_kernel(const std::string& arg) {
  if (!looks_like_path(arg)) {
    for (const auto& name : ecm::builtin_kernel_names())
      if (name == arg) return ecm::builtin_kernel(arg);
    if (auto path = search_model_dir(arg))
      return ecm::parse_kernel(read_file(*path));
  }
  return ecm::parse_kernel(read_file(arg));
}

std::vector<int> parse_cores(const std::string& spec, int total) {
  std::vector<int> cores;
  auto add = [&](const std::string& piece) {
    auto dots = piece.find("..");
    if (dots != std::string::npos) {
      int lo = std::stoi(piece.substr(0, dots));
      int hi = std::stoi(piece.substr(dots + 2));
      for (int n = lo; n <= hi; ++n) cores.push_back(n);
    } else {
      cores.push_back(std::stoi(piece));
    }
  };
  std::istringstream in(spec);
  std::string piece;
  try {
    while (std::getline(in, piece, ',')) add(piece);
  } catch (const std::exception&) {
    throw ecm::ConfigError("bad core spec '" + spec +
                           "' (use N, A..B, or a comma list)");
  }
  if (cores.empty()) throw ecm::ConfigError("empty core spec");
  for (int n : cores)
    if (n < 1 || n > total)
      throw ecm::ConfigError("core count " + std::to_string(n) +
                             " outside 1.." + std::to_string(total));
  return cores;
}

struct CommonModelArgs {
  std::string machine;
  std::string kernel;
  std::string format = "table";
  Format fmt() const {
    return format == "csv" ? Format::csv : Format::table;
  }
};

struct ScaleArgs {
  std::string cores = "1";
  double p0 = 0;
  std::string placement = "close";
  std::string barrier_file;
  std::string traffic_file;
  bool contended = false;
  double contended_bw = 0;

  ecm::ScalingOptions options() const {
    ecm::ScalingOptions opt;
    opt.p0 = p0;
    opt.placement = placement == "spread" ? ecm::Placement::spread
                                          : ecm::Placement::close;
    opt.contended = contended;
    opt.contended_bw = contended_bw;
    if (!barrier_file.empty())
      opt.barrier = ecm::csvio::load_barrier(read_file(barrier_file),
                                             barrier_file);
    if (!traffic_file.empty())
      opt.traffic_override = ecm::csvio::load_traffic(
          read_file(traffic_file), traffic_file);
    return opt;
  }
};

void add_format_flag(CLI::App* cmd, CommonModelArgs& args) {
  cmd->add_option("--format", args.format, "output format")
      ->check(CLI::IsMember({"table", "csv"}))
      ->capture_default_str();
}

void add_scale_flags(CLI::App* cmd, ScaleArgs& args) {
  cmd->add_option("--cores", args.cores,
                  "core counts: N, A..B, or comma list")
      ->capture_default_str();
  cmd->add_option("--p0", args.p0, "memory conflict penalty, cycles")
      ->capture_default_str();
  cmd->add_option("--placement", args.placement, "thread placement")
      ->check(CLI::IsMember({"close", "spread"}))
      ->capture_default_str();
  cmd->add_option("--barrier", args.barrier_file,
                  "barrier cost CSV (threads,cycles)");
  cmd->add_option("--traffic", args.traffic_file,
                  "measured volume CSV (link,down_bytes_per_it,up_bytes_per_it)");
  cmd->add_flag("--contended", args.contended,
                "active domains share one memory pool");
  cmd->add_option("--contended-bw", args.contended_bw,
                  "aggregate pool bandwidth, B/cy");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"analytic loop-kernel runtime prediction"};
  app.require_subcommand(1);

  // machines
  auto* cmd_machines = app.add_subcommand("machines", "list machine presets");
  std::string machines_format = "table";
  cmd_machines->add_option("--format", machines_format, "output format")
      ->check(CLI::IsMember({"table", "csv"}))
      ->capture_default_str();

  // predict
  CommonModelArgs predict_args;
  std::string predict_residence;
  std::string predict_traffic;
  auto* cmd_predict =
      app.add_subcommand("predict", "single-core runtime breakdown");
  cmd_predict->add_option("--machine", predict_args.machine,
                          "machine preset or file")->required();
  cmd_predict->add_option("--kernel", predict_args.kernel,
                          "kernel preset or file")->required();
  cmd_predict->add_option("--residence", predict_residence,
                          "force data placement")
      ->check(CLI::IsMember({"l1", "l2", "l3", "mem"}));
  cmd_predict->add_option("--traffic", predict_traffic,
                          "measured volume CSV overriding derived traffic");
  add_format_flag(cmd_predict, predict_args);

  // scale
  CommonModelArgs scale_margs;
  ScaleArgs scale_args;
  auto* cmd_scale = app.add_subcommand("scale", "multicore scaling curve");
  cmd_scale->add_option("--machine", scale_margs.machine,
                        "machine preset or file")->required();
  cmd_scale->add_option("--kernel", scale_margs.kernel,
                        "kernel preset or file")->required();
  add_scale_flags(cmd_scale, scale_args);
  add_format_flag(cmd_scale, scale_margs);

  // compose
  CommonModelArgs compose_margs;
  ScaleArgs compose_scale;
  std::string composite_file;
  bool compose_pcg = false, compose_no_norm = false;
  auto* cmd_compose =
      app.add_subcommand("compose", "composite solver prediction");
  cmd_compose->add_option("--machine", compose_margs.machine,
                          "machine preset or file")->required();
  cmd_compose->add_option("--composite", composite_file,
                          "composite spec file");
  cmd_compose->add_flag("--pcg", compose_pcg, "use the built-in PCG spec");
  cmd_compose->add_flag("--no-norm", compose_no_norm,
                        "drop the residual norm from the built-in spec");
  add_scale_flags(cmd_compose, compose_scale);
  add_format_flag(cmd_compose, compose_margs);

  // fit-p0
  CommonModelArgs fit_margs;
  ScaleArgs fit_scale;
  std::string fit_measured;
  auto* cmd_fit =
      app.add_subcommand("fit-p0", "fit the conflict penalty to data");
  cmd_fit->add_option("--machine", fit_margs.machine,
                      "machine preset or file")->required();
  cmd_fit->add_option("--kernel", fit_margs.kernel,
                      "kernel preset or file")->required();
  cmd_fit->add_option("--measured", fit_measured,
                      "measured CSV (cores,performance_it_per_s)")
      ->required();
  add_scale_flags(cmd_fit, fit_scale);
  add_format_flag(cmd_fit, fit_margs);

  // infer
  CommonModelArgs infer_margs;
  std::string infer_link = "l1l2";
  std::string infer_measured;
  std::string infer_bandwidths = "16,32,64";
  auto* cmd_infer =
      app.add_subcommand("infer", "rank link parameter hypotheses");
  cmd_infer->add_option("--machine", infer_margs.machine,
                        "machine preset or file")->required();
  cmd_infer->add_option("--kernel", infer_margs.kernel,
                        "kernel preset or file")->required();
  cmd_infer->add_option("--link", infer_link, "link under study")
      ->check(CLI::IsMember({"l1l2", "l2l3", "l2mem", "l3mem"}))
      ->capture_default_str();
  cmd_infer->add_option("--bandwidths", infer_bandwidths,
                        "candidate bandwidths, B/cy, comma list")
      ->capture_default_str();
  cmd_infer->add_option("--measured", infer_measured,
                        "measured CSV (residence,cycles_per_it)")
      ->required();
  add_format_flag(cmd_infer, infer_margs);

  // compare
  CommonModelArgs compare_margs;
  ScaleArgs compare_scale;
  std::string compare_measured;
  auto* cmd_compare =
      app.add_subcommand("compare", "model vs measured scaling");
  cmd_compare->add_option("--machine", compare_margs.machine,
                          "machine preset or file")->required();
  cmd_compare->add_option("--kernel", compare_margs.kernel,
                          "kernel preset or file")->required();
  cmd_compare->add_option("--measured", compare_measured,
                          "measured CSV (cores,performance_it_per_s)")
      ->required();
  add_scale_flags(cmd_compare, compare_scale);
  add_format_flag(cmd_compare, compare_margs);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exits 0
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (cmd_machines->parsed()) {
      std::cout << ecm::report::machines(
          machines_format == "csv" ? Format::csv : Format::table);
      return 0;
    }

    if (cmd_predict->parsed()) {
      ecm::MachineModel m = resolve_machine(predict_args.machine);
      ecm::KernelModel k = resolve_kernel(predict_args.kernel);
      ecm::PredictOptions opt;
      if (!predict_residence.empty())
        opt.residence = *ecm::level_from_string(predict_residence);
      if (!predict_traffic.empty())
        opt.traffic_override = ecm::csvio::load_traffic(
            read_file(predict_traffic), predict_traffic);
      ecm::Prediction p = ecm::predict_single(k, m, opt);
      std::cout << ecm::report::prediction(p, m, k, predict_args.fmt());
      return 0;
    }

    if (cmd_scale->parsed()) {
      ecm::MachineModel m = resolve_machine(scale_margs.machine);
      ecm::KernelModel k = resolve_kernel(scale_margs.kernel);
      ecm::ScalingOptions opt = scale_args.options();
      auto cores = parse_cores(scale_args.cores, m.topology.total_cores());
      ecm::ScalingCurve curve;
      for (int n : cores) {
        curve.points.push_back(ecm::predict_scaling_point(k, m, n, opt));
        if (curve.n_sat == 0 && curve.points.back().saturated)
          curve.n_sat = n;
      }
      std::cout << ecm::report::curve(curve, scale_margs.fmt());
      return 0;
    }

    if (cmd_compose->parsed()) {
      ecm::MachineModel m = resolve_machine(compose_margs.machine);
      ecm::CompositeSpec spec;
      if (!composite_file.empty()) {
        spec = ecm::parse_composite(read_file(composite_file),
                                    resolve_kernel);
      } else if (compose_pcg || compose_no_norm) {
        spec = ecm::pcg_composite(!compose_no_norm);
      } else {
        throw ecm::ConfigError("compose needs --composite FILE or --pcg");
      }
      ecm::ScalingOptions opt = compose_scale.options();
      auto cores = parse_cores(compose_scale.cores,
                               m.topology.total_cores());
      ecm::CompositeCurve curve;
      curve.name = spec.name;
      for (int n : cores)
        curve.points.push_back(ecm::compose_point(spec, m, n, opt));
      std::cout << ecm::report::composite(curve, compose_margs.fmt());
      return 0;
    }

    if (cmd_fit->parsed()) {
      ecm::MachineModel m = resolve_machine(fit_margs.machine);
      ecm::KernelModel k = resolve_kernel(fit_margs.kernel);
      auto measured = ecm::csvio::load_measured_scaling(
          read_file(fit_measured), fit_measured);
      ecm::FitResult r =
          ecm::fit_p0(k, m, measured, fit_scale.options());
      std::cout << ecm::report::fit(r, fit_margs.fmt());
      return 0;
    }

    if (cmd_infer->parsed()) {
      ecm::MachineModel m = resolve_machine(infer_margs.machine);
      ecm::KernelModel k = resolve_kernel(infer_margs.kernel);
      auto measured = ecm::csvio::load_residence_cycles(
          read_file(infer_measured), infer_measured);
      std::vector<double> bws;
      std::istringstream in(infer_bandwidths);
      std::string piece;
      while (std::getline(in, piece, ',')) {
        try {
          bws.push_back(std::stod(piece));
        } catch (const std::exception&) {
          throw ecm::ConfigError("bad bandwidth '" + piece + "'");
        }
      }
      auto ranked = ecm::infer_parameters(
          k, m, *ecm::link_from_string(infer_link), bws, {false, true},
          measured);
      std::cout << ecm::report::hypotheses(ranked, infer_margs.fmt());
      return 0;
    }

    if (cmd_compare->parsed()) {
      ecm::MachineModel m = resolve_machine(compare_margs.machine);
      ecm::KernelModel k = resolve_kernel(compare_margs.kernel);
      auto measured = ecm::csvio::load_measured_scaling(
          read_file(compare_measured), compare_measured);
      ecm::ComparisonReport rep =
          ecm::compare_scaling(k, m, measured, compare_scale.options());
      std::cout << ecm::report::comparison(rep, compare_margs.fmt());
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
