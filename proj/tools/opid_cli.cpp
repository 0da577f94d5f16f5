// Command-line front end: synthetic stream generation, compressing-stage
// passes with resumable snapshots, full experiments and report regeneration.

#include "opid/opid.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace {

void add_synth_options(CLI::App* cmd, opid::SynthConfig& cfg) {
  cmd->add_option("--dv", cfg.schema.d_v, "vanished feature count")->capture_default_str();
  cmd->add_option("--ds", cfg.schema.d_s, "survived feature count")->capture_default_str();
  cmd->add_option("--da", cfg.schema.d_a, "augmented feature count")->capture_default_str();
  cmd->add_option("--classes", cfg.schema.c, "class count")->capture_default_str();
  cmd->add_option("--batches", cfg.batches, "number of C-stage batches")->capture_default_str();
  cmd->add_option("--batch-size", cfg.n_per_batch, "rows per C-stage batch")->capture_default_str();
  cmd->add_option("--estage-n", cfg.n_estage, "rows in each E-stage file")->capture_default_str();
  cmd->add_option("--separation", cfg.separation, "class-mean scale")->capture_default_str();
  cmd->add_option("--noise", cfg.noise, "per-feature noise scale")->capture_default_str();
  cmd->add_option("--signal-v", cfg.signal_v, "informative fraction, vanished")->capture_default_str();
  cmd->add_option("--signal-s", cfg.signal_s, "informative fraction, survived")->capture_default_str();
  cmd->add_option("--signal-a", cfg.signal_a, "informative fraction, augmented")->capture_default_str();
  cmd->add_option("--data-seed", cfg.seed, "generator seed")->capture_default_str();
}

std::vector<opid::Method> parse_methods(const std::vector<std::string>& names) {
  std::vector<opid::Method> out;
  for (const auto& n : names) out.push_back(opid::parse_method(n));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"One-pass classifier for streams whose feature set changes between stages"};
  app.require_subcommand(1);

  // synth
  opid::SynthConfig synth_cfg;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "write a synthetic evolving-feature stream and manifest");
  add_synth_options(synth, synth_cfg);
  synth->add_option("--out", synth_out, "output directory")->required();

  // cstage
  std::string cs_manifest, cs_out, cs_resume, cs_model_out, cs_mode;
  double cs_lambda = 1.0, cs_rho = 0.1;
  auto* cstage = app.add_subcommand("cstage", "run (or resume) a one-pass C-stage and snapshot the statistics");
  cstage->add_option("--manifest", cs_manifest, "stream manifest")->required()->check(CLI::ExistingFile);
  cstage->add_option("--mode", cs_mode, "direct or inverse (default: by size)")
      ->check(CLI::IsMember({"direct", "inverse"}));
  cstage->add_option("--lambda", cs_lambda, "consistency weight")->capture_default_str();
  cstage->add_option("--rho", cs_rho, "ridge weight")->capture_default_str();
  cstage->add_option("--resume", cs_resume, "continue from a snapshot")->check(CLI::ExistingFile);
  cstage->add_option("--out", cs_out, "snapshot file")->required();
  cstage->add_option("--model-out", cs_model_out, "write the solved W_s as text");

  // run
  opid::SynthConfig run_cfg;
  opid::ExperimentSpec spec;
  std::string run_manifest, run_out = "report", run_mode;
  std::vector<std::string> method_names;
  auto* run = app.add_subcommand("run", "run the full experiment protocol and write a report");
  run->add_option("--manifest", run_manifest, "stream manifest (default: synthetic stream)")
      ->check(CLI::ExistingFile);
  add_synth_options(run, run_cfg);
  run->add_option("--methods", method_names, "subset of OPID,OPIDe,BASE_ALL,BASE_S,BASE_A")
      ->delimiter(',');
  run->add_option("--mode", run_mode, "direct or inverse")->check(CLI::IsMember({"direct", "inverse"}));
  run->add_option("--lambda", spec.lambdas, "lambda grid")->delimiter(',')->capture_default_str();
  run->add_option("--rho", spec.rhos, "rho grid")->delimiter(',')->capture_default_str();
  run->add_option("--gamma", spec.gammas, "gamma grid")->delimiter(',')->capture_default_str();
  run->add_option("--alpha", spec.alphas, "logistic alpha grid")->delimiter(',')->capture_default_str();
  run->add_option("--repeats", spec.repeats, "random E-stage splits")->capture_default_str();
  run->add_option("--folds", spec.folds, "cross-validation folds")->capture_default_str();
  run->add_option("--seed", spec.seed, "split seed")->capture_default_str();
  run->add_option("--out", run_out, "report directory")->capture_default_str();

  // report
  std::string rep_records, rep_out;
  auto* report = app.add_subcommand("report", "rebuild the summary table from a records.csv");
  report->add_option("--records", rep_records, "machine-readable record")->required()->check(CLI::ExistingFile);
  report->add_option("--out", rep_out, "directory to re-emit the report into");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      const auto st = opid::generate_synthetic(synth_cfg);
      opid::write_stream(synth_out, st);
      std::cout << "wrote " << st.cstage.size() << " C-stage batches to "
                << (std::filesystem::path(synth_out) / "manifest.txt").string() << '\n';
      return 0;
    }

    if (cstage->parsed()) {
      opid::StreamReader reader(opid::parse_manifest(cs_manifest));
      const auto& schema = reader.manifest().schema;
      opid::CStageStats stats;
      if (!cs_resume.empty()) {
        std::ifstream in(cs_resume);
        stats = opid::load_stats(in);
        if (stats.schema != schema) throw opid::SchemaError("snapshot schema differs from manifest");
        for (long long i = 0; i < stats.t; ++i)
          if (!reader.next()) throw opid::SchemaError("snapshot covers more batches than the manifest lists");
      } else {
        const auto mode = cs_mode.empty() ? opid::default_mode(schema) : opid::parse_mode(cs_mode);
        stats = opid::init_stats(schema, cs_rho, cs_lambda, mode);
      }
      while (auto b = reader.next()) opid::absorb_batch(stats, *b);
      std::ofstream out(cs_out);
      opid::save_stats(out, stats);
      const auto model = opid::solve_model(stats);
      if (!cs_model_out.empty()) {
        std::ofstream mo(cs_model_out);
        mo << model.w_s << '\n';
      }
      std::cout << "absorbed " << stats.t << " batches (" << opid::to_string(stats.mode)
                << " mode, m=" << stats.dim() << "), ||W_s||_F = " << model.w_s.norm() << '\n';
      return 0;
    }

    if (run->parsed()) {
      if (!run_manifest.empty()) spec.source = std::filesystem::path(run_manifest);
      else spec.source = run_cfg;
      if (!method_names.empty()) spec.methods = parse_methods(method_names);
      if (!run_mode.empty()) spec.mode = opid::parse_mode(run_mode);
      const auto table = opid::run_experiment(spec);
      opid::emit_report(table, run_out);
      std::cout << opid::format_table(table);
      return table.aborted.empty() ? 0 : 1;
    }

    if (report->parsed()) {
      const auto table = opid::parse_records(rep_records);
      if (!rep_out.empty()) opid::emit_report(table, rep_out);
      std::cout << opid::format_table(table);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
