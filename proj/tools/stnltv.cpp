// Command-line driver: simulate degradations, restore observations, run
// benchmark experiments against a ground truth, and record convergence
// traces against a reference solution.
//
// Exit codes: 0 success, 2 configuration/input error, 3 numerical failure.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <map>

#include "stnltv/stnltv.hpp"

namespace {

using namespace stnltv;

struct SolveCliOptions {
  RestoreOptions opts;
  std::string reg = "st-tv";
  std::string p = "1";
  std::string solver = "mlfbf";
  std::string mode = "epi";
};

void add_solve_options(CLI::App* cmd, SolveCliOptions& s) {
  cmd->add_option("--reg", s.reg, "Regularizer: st-tv | st-nltv | cc-tv | cc-nltv")
      ->check(CLI::IsMember({"st-tv", "st-nltv", "cc-tv", "cc-nltv"}))
      ->capture_default_str();
  cmd->add_option("--p", s.p, "Schatten/vector norm order: 1 | 2 | inf")
      ->check(CLI::IsMember({"1", "2", "inf"}))
      ->capture_default_str();
  cmd->add_option("--eta", s.opts.eta, "Absolute constraint bound");
  cmd->add_option("--eta-ratio", s.opts.eta_ratio,
                  "Bound as a fraction of the ground-truth seminorm (needs a truth image)");
  cmd->add_option("--solver", s.solver, "mlfbf | sdmm")
      ->check(CLI::IsMember({"mlfbf", "sdmm"}))
      ->capture_default_str();
  cmd->add_option("--mode", s.mode, "Constraint handling: epi | direct")
      ->check(CLI::IsMember({"epi", "direct"}))
      ->capture_default_str();
  cmd->add_option("--max-iter", s.opts.solver_cfg.max_iter)->capture_default_str();
  cmd->add_option("--tol", s.opts.solver_cfg.stop_tol, "Relative-change stopping tolerance")
      ->capture_default_str();
  cmd->add_option("--epsilon", s.opts.solver_cfg.epsilon, "Step margin (forward-backward-forward)")
      ->capture_default_str();
  cmd->add_option("--sdmm-gamma", s.opts.solver_cfg.gamma, "SDMM penalty parameter")
      ->capture_default_str();
  cmd->add_option("--cg-tol", s.opts.solver_cfg.cg_tol, "SDMM inner CG tolerance")
      ->capture_default_str();
  cmd->add_option("--solver-seed", s.opts.solver_cfg.seed, "Power-iteration seed")
      ->capture_default_str();
  cmd->add_option("--box-lo", s.opts.box.lo)->capture_default_str();
  cmd->add_option("--box-hi", s.opts.box.hi)->capture_default_str();
  cmd->add_option("--search-side", s.opts.reg.patch.search_side, "Non-local search window side")
      ->capture_default_str();
  cmd->add_option("--patch-side", s.opts.reg.patch.patch_side, "Similarity patch side (odd)")
      ->capture_default_str();
  cmd->add_option("--bandwidth", s.opts.reg.patch.bandwidth, "Similarity bandwidth")
      ->capture_default_str();
  cmd->add_option("--max-neighbors", s.opts.reg.patch.max_neighbors, "Kept neighbors per pixel")
      ->capture_default_str();
  cmd->add_option("--gaussian-std", s.opts.reg.patch.gaussian_std,
                  "Patch window std (0 = (patch_side-1)/4)")
      ->capture_default_str();
  cmd->add_option("--bootstrap-eta", s.opts.bootstrap_eta,
                  "Absolute bound for the pilot TV solve (0 = derive)")
      ->capture_default_str();
  cmd->add_option("--bootstrap-iters", s.opts.bootstrap_cfg.max_iter)->capture_default_str();
  cmd->add_option("--bootstrap-tol", s.opts.bootstrap_cfg.stop_tol)->capture_default_str();
  cmd->add_option("--graph-cache", s.opts.graph_cache,
                  "Graph sidecar path: loaded if present, written otherwise");
  cmd->add_flag("--trace-timing", s.opts.trace_timing,
                "Write wall-clock seconds into trace.csv (off keeps reruns byte-identical)");
}

void finalize(SolveCliOptions& s) {
  static const std::map<std::string, Regularizer> regs{{"st-tv", Regularizer::ST_TV},
                                                       {"st-nltv", Regularizer::ST_NLTV},
                                                       {"cc-tv", Regularizer::CC_TV},
                                                       {"cc-nltv", Regularizer::CC_NLTV}};
  static const std::map<std::string, SchattenP> ps{
      {"1", SchattenP::One}, {"2", SchattenP::Two}, {"inf", SchattenP::Inf}};
  s.opts.reg.kind = regs.at(s.reg);
  s.opts.reg.p = ps.at(s.p);
  s.opts.solver = s.solver == "sdmm" ? SolverKind::SDMM : SolverKind::MLFBF;
  s.opts.solver_cfg.mode =
      s.mode == "direct" ? SolverMode::Direct : SolverMode::Epigraphical;
  s.opts.bootstrap_cfg.mode = s.opts.solver_cfg.mode;
}

void print_report(const MetricsReport& m) {
  write_report_text(m, std::cout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constrained multiband image restoration with structure-tensor "
               "(non-local) total variation"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from a key=value config file");

  // degrade
  auto* dg = app.add_subcommand("degrade", "Simulate blur + decimation + noise");
  std::string dg_input, dg_output, dg_truth_out;
  Scenario dg_sc;
  std::uint64_t dg_seed = 1;
  bool dg_normalize = true;
  dg->add_option("--input", dg_input, "Source image (PPM or BSQ-F32)")->required();
  dg->add_option("--output", dg_output, "Observation file to write")->required();
  dg->add_option("--sigma", dg_sc.sigma, "Noise std")->capture_default_str();
  dg->add_option("--blur", dg_sc.blur, "Uniform blur side (odd, 1 = none)")->capture_default_str();
  dg->add_option("--decimation", dg_sc.decimation, "Dropped fraction in [0,1)")
      ->capture_default_str();
  dg->add_option("--seed", dg_seed)->capture_default_str();
  dg->add_flag("--normalize,!--no-normalize", dg_normalize,
               "Normalize each band to [0,255] first");
  dg->add_option("--save-truth", dg_truth_out, "Also write the (normalized) source image");

  // restore
  auto* rs = app.add_subcommand("restore", "Restore an observation file");
  std::string rs_obs, rs_out, rs_truth;
  SolveCliOptions rs_cli;
  rs->add_option("--obs", rs_obs, "Observation file")->required();
  rs->add_option("--out", rs_out, "Output directory")->required();
  rs->add_option("--truth", rs_truth, "Ground-truth image, enables SNR and --eta-ratio");
  add_solve_options(rs, rs_cli);

  // bench
  auto* bn = app.add_subcommand("bench", "Degrade a ground truth and restore it end-to-end");
  std::string bn_input, bn_out;
  Scenario bn_sc;
  std::uint64_t bn_seed = 1;
  SolveCliOptions bn_cli;
  bn->add_option("--input", bn_input, "Ground-truth image")->required();
  bn->add_option("--out", bn_out, "Output directory")->required();
  bn->add_option("--sigma", bn_sc.sigma)->capture_default_str();
  bn->add_option("--blur", bn_sc.blur)->capture_default_str();
  bn->add_option("--decimation", bn_sc.decimation)->capture_default_str();
  bn->add_option("--seed", bn_seed)->capture_default_str();
  add_solve_options(bn, bn_cli);

  // trace
  auto* tr = app.add_subcommand("trace",
                                "Restore while logging the per-iteration error to a reference");
  std::string tr_obs, tr_out, tr_ref, tr_truth;
  SolveCliOptions tr_cli;
  tr->add_option("--obs", tr_obs, "Observation file")->required();
  tr->add_option("--ref", tr_ref, "Reference solution image (e.g. from a tighter run)")
      ->required();
  tr->add_option("--out", tr_out, "Output directory")->required();
  tr->add_option("--truth", tr_truth, "Ground-truth image, enables SNR and --eta-ratio");
  add_solve_options(tr, tr_cli);

  try {
    app.parse(argc, argv);

    if (dg->parsed()) {
      MultibandImage img = read_image(dg_input);
      if (dg_normalize) normalize_bands(img);
      const DegradedObservation obs = degrade(img, dg_sc, dg_seed);
      write_observation(obs, dg_output);
      if (!dg_truth_out.empty()) write_image(img, dg_truth_out);
      std::cout << "wrote " << dg_output << " (" << obs.bands << " bands, " << obs.kept
                << " of " << img.pixels() << " samples kept per band)\n";
    } else if (rs->parsed()) {
      finalize(rs_cli);
      rs_cli.opts.output_dir = rs_out;
      const DegradedObservation obs = read_observation(rs_obs);
      MultibandImage truth;
      const bool have_truth = !rs_truth.empty();
      if (have_truth) truth = read_image(rs_truth);
      const RestoreOutcome out =
          run_restore(obs, rs_cli.opts, have_truth ? &truth : nullptr);
      print_report(out.report);
    } else if (bn->parsed()) {
      finalize(bn_cli);
      bn_cli.opts.output_dir = bn_out;
      MultibandImage truth = read_image(bn_input);
      const RestoreOutcome out = run_experiment(std::move(truth), bn_sc, bn_seed, bn_cli.opts);
      print_report(out.report);
    } else if (tr->parsed()) {
      finalize(tr_cli);
      tr_cli.opts.output_dir = tr_out;
      const DegradedObservation obs = read_observation(tr_obs);
      MultibandImage ref = read_image(tr_ref);
      MultibandImage truth;
      const bool have_truth = !tr_truth.empty();
      if (have_truth) truth = read_image(tr_truth);
      tr_cli.opts.solver_cfg.reference = &ref;
      const RestoreOutcome out =
          run_restore(obs, tr_cli.opts, have_truth ? &truth : nullptr);
      auto os = stnltv::io_detail::open_out(
          (std::filesystem::path(tr_out) / "trace_ref.csv").string());
      write_reference_trace_csv(out.solve.trace, os, true);
      print_report(out.report);
    }
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
