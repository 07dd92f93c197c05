#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>

#include "trimix/error.hpp"
#include "trimix/eval.hpp"
#include "trimix/train.hpp"
#include "trimix_oracle/verify.hpp"

namespace fs = std::filesystem;

namespace trimix::cli {

namespace {

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::string out = "trimix_out";
};

struct EvalArgs {
  std::string checkpoint;
  bool init_only = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "key=value config file");
  cmd->add_option("--set", c.sets, "override one key, key=value (repeatable)");
  cmd->add_option("--out", c.out, "output directory")->capture_default_str();
}

void apply_sets(TriMixConfig& cfg, const std::vector<std::string>& sets) {
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    cfg.set(s.substr(0, eq), s.substr(eq + 1));
  }
}

// Config from (base text | --config file), then --set, then TRIMIX_SEED.
TriMixConfig resolve(const Common& c, const std::string& base_text, std::ostream& err) {
  TriMixConfig cfg;
  if (!c.config.empty()) cfg = TriMixConfig::load(c.config);
  else if (!base_text.empty()) cfg = TriMixConfig::from_text(base_text);
  apply_sets(cfg, c.sets);
  if (const char* env = std::getenv("TRIMIX_SEED"); env != nullptr && *env != '\0') {
    cfg.set("seed", env);
    err << "trimix: TRIMIX_SEED=" << env << " overrides the configured seed\n";
  }
  cfg.validate();
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << text;
}

void snapshot(const fs::path& dir, const TriMixConfig& cfg) {
  fs::create_directories(dir);
  write_text(dir / "config.txt", cfg.to_text());
}

void append_report(const fs::path& dir, const eval::EvalReport& rep) {
  const fs::path path = dir / "reports.csv";
  const bool fresh = !fs::exists(path);
  std::ofstream f(path, std::ios::app);
  if (!f) throw Error("cannot write " + path.string());
  if (fresh) f << eval::kReportHeader << '\n';
  f << rep.csv_line() << '\n';
}

model::ModelParams eval_params(const EvalArgs& ea, const TriMixConfig& cfg, const data::Dataset& ds) {
  const model::Arch arch = cfg.arch(ds.input_width());
  if (ea.init_only) return model::init_params(arch, derive_seed(cfg.seed, {0x1417}));
  return train::load_checkpoint(ea.checkpoint, arch).params;
}

std::string checkpoint_config(const EvalArgs& ea) {
  if (ea.init_only || ea.checkpoint.empty()) return {};
  return train::load_checkpoint(ea.checkpoint).config_text;
}

int cmd_pretrain(const Common& c, const std::string& resume, std::ostream& out, std::ostream& err) {
  std::optional<train::Checkpoint> ckpt;
  if (!resume.empty()) ckpt = train::load_checkpoint(resume);
  const TriMixConfig cfg = resolve(c, ckpt ? ckpt->config_text : std::string{}, err);
  const train::DatasetPair ds = train::load_datasets(cfg);
  const fs::path dir = c.out;
  snapshot(dir, cfg);

  train::PretrainOptions opts;
  opts.out_dir = dir.string();
  opts.resume = std::move(ckpt);
  std::uint64_t cur_epoch = 0;
  double sum = 0.0;
  std::size_t count = 0;
  auto flush = [&] {
    if (count == 0) return;
    char buf[96];
    std::snprintf(buf, sizeof buf, "epoch %llu/%zu  mean total %.6f\n", static_cast<unsigned long long>(cur_epoch),
                  cfg.epochs, sum / static_cast<double>(count));
    out << buf << std::flush;
  };
  opts.on_step = [&](const train::MetricsRow& row) {
    if (row.epoch != cur_epoch) {
      flush();
      cur_epoch = row.epoch;
      sum = 0.0;
      count = 0;
    }
    sum += row.loss.total;
    ++count;
  };
  const train::PretrainResult res = train::pretrain(cfg, ds.train, std::move(opts));
  flush();
  train::write_metrics_csv((dir / "metrics.csv").string(), res.metrics);
  out << "checkpoint " << (dir / "checkpoint.tmx").string() << "  arch " << res.checkpoint.params.arch.descriptor()
      << "  config " << config_digest(cfg) << '\n';
  return kOk;
}

enum class Protocol { Knn, Probe, Finetune };

int cmd_eval(Protocol p, const Common& c, const EvalArgs& ea, std::optional<double> fraction, std::ostream& out,
             std::ostream& err) {
  if (!ea.init_only && ea.checkpoint.empty()) throw ConfigError("--checkpoint is required (or --init-only)");
  const TriMixConfig cfg = resolve(c, checkpoint_config(ea), err);
  const train::DatasetPair ds = train::load_datasets(cfg);
  const model::ModelParams params = eval_params(ea, cfg, ds.train);

  eval::EvalReport rep;
  switch (p) {
    case Protocol::Knn:
      rep = eval::knn_eval(eval::extract_features(params, ds.train), eval::extract_features(params, ds.test),
                           cfg.knn_k);
      break;
    case Protocol::Probe:
      rep = eval::linear_probe(eval::extract_features(params, ds.train), eval::extract_features(params, ds.test),
                               eval::ProbeConfig::from(cfg));
      break;
    case Protocol::Finetune:
      rep = eval::finetune_semi(params, ds.train, ds.test, fraction.value_or(cfg.finetune_fraction),
                                eval::ProbeConfig::from(cfg), cfg.finetune_epochs);
      break;
  }
  rep.config_digest = config_digest(cfg);
  snapshot(c.out, cfg);
  append_report(c.out, rep);
  out << rep.pretty() << '\n';
  return kOk;
}

int cmd_gradcheck(const Common& c, double lambda, const trimix_oracle::GradcheckOptions& opts, std::ostream& out,
                  std::ostream& err) {
  TriMixConfig cfg = resolve(c, {}, err);
  cfg.lambda_policy = LambdaPolicy::fixed(lambda);
  const auto res = trimix_oracle::run_gradcheck(cfg, opts);
  char buf[160];
  for (const auto& t : res.tensors) {
    std::snprintf(buf, sizeof buf, "  %-20s %7zu coords  rel err %.3e\n", t.name.c_str(), t.coords, t.rel_error);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "max relative error %.3e (tol %.0e) in %.1fs: %s\n", res.max_rel_error,
                res.tolerance, res.seconds, res.pass ? "PASS" : "FAIL");
  out << buf;
  return res.pass ? kOk : kNumeric;
}

int cmd_verify(std::size_t cases, std::uint64_t seed, std::ostream& out) {
  const auto reports = trimix_oracle::run_oracle_equivalence(cases, seed);
  std::map<std::string, std::pair<std::size_t, double>> by_quantity;  // failures, worst diff
  std::vector<const trimix_oracle::OracleReport*> failures;
  for (const auto& r : reports) {
    auto& q = by_quantity[r.case_id.substr(0, r.case_id.find('#'))];
    q.second = std::max(q.second, r.max_abs_diff);
    if (!r.pass) {
      ++q.first;
      failures.push_back(&r);
    }
  }
  char buf[160];
  for (const auto& [name, q] : by_quantity) {
    std::snprintf(buf, sizeof buf, "  %-6s %zu cases  max abs diff %.3e  %s\n", name.c_str(), cases, q.second,
                  q.first == 0 ? "PASS" : "FAIL");
    out << buf;
  }
  for (const auto* f : failures) out << "  " << f->case_id << " seed " << f->seed << ": " << f->detail << '\n';
  out << (failures.empty() ? "oracle equivalence: PASS\n" : "oracle equivalence: FAIL\n");
  return failures.empty() ? kOk : kNumeric;
}

int cmd_export(const Common& c, const EvalArgs& ea, const std::string& split, std::ostream& out,
               std::ostream& err) {
  if (!ea.init_only && ea.checkpoint.empty()) throw ConfigError("--checkpoint is required (or --init-only)");
  const TriMixConfig cfg = resolve(c, checkpoint_config(ea), err);
  const train::DatasetPair ds = train::load_datasets(cfg);
  const model::ModelParams params = eval_params(ea, cfg, ds.train);
  const data::Dataset& which = split == "test" ? ds.test : ds.train;
  const eval::FeatureBank bank = eval::extract_features(params, which);

  fs::create_directories(c.out);
  const fs::path path = fs::path(c.out) / ("embeddings_" + split + ".csv");
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path.string());
  const std::size_t d = bank.features.row_size();
  f << "label";
  for (std::size_t j = 0; j < d; ++j) f << ",y" << j;
  f << '\n';
  char buf[32];
  for (std::size_t i = 0; i < bank.size(); ++i) {
    f << bank.labels[i];
    for (std::size_t j = 0; j < d; ++j) {
      std::snprintf(buf, sizeof buf, ",%.9g", bank.features.at(i, j));
      f << buf;
    }
    f << '\n';
  }
  snapshot(c.out, cfg);
  out << "wrote " << bank.size() << " x " << d << " embeddings to " << path.string() << '\n';
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"TriMix self-supervised pretraining and evaluation", "trimix"};
  app.require_subcommand(1);

  Common common;
  EvalArgs ea;
  std::string resume;
  double fraction = 0.0;
  std::string split = "train";
  double lambda = 0.3;
  trimix_oracle::GradcheckOptions gopts;
  gopts.max_coords = 8192;
  std::size_t cases = 100;
  std::uint64_t oracle_seed = 0;

  auto* pretrain = app.add_subcommand("pretrain", "train encoder and projector with the TriMix objective");
  add_common(pretrain, common);
  pretrain->add_option("--resume", resume, "continue from a checkpoint");

  auto* knn = app.add_subcommand("knn", "KNN accuracy of frozen representations");
  auto* probe = app.add_subcommand("probe", "linear probe on frozen representations");
  auto* finetune = app.add_subcommand("finetune", "fine-tune encoder + head on a labelled fraction");
  auto* exporter = app.add_subcommand("export-embeddings", "write frozen representations to CSV");
  for (auto* cmd : {knn, probe, finetune, exporter}) {
    add_common(cmd, common);
    cmd->add_option("--checkpoint", ea.checkpoint, "checkpoint file");
    cmd->add_flag("--init-only", ea.init_only, "use a freshly initialised encoder instead of a checkpoint");
  }
  auto* fraction_opt = finetune->add_option("--fraction", fraction, "labelled fraction (default finetune.fraction)");
  exporter->add_option("--split", split, "train or test")->check(CLI::IsMember({"train", "test"}))->capture_default_str();

  auto* gradcheck = app.add_subcommand("gradcheck", "tape gradients vs central finite differences");
  add_common(gradcheck, common);
  gradcheck->add_option("--lambda", lambda, "fixed mixing factor")->capture_default_str();
  gradcheck->add_option("--batch", gopts.batch, "batch size")->capture_default_str();
  gradcheck->add_option("--grid", gopts.grid, "synthetic image side")->capture_default_str();
  gradcheck->add_option("--seed", gopts.seed, "init and data seed")->capture_default_str();
  gradcheck->add_option("--max-coords", gopts.max_coords, "probed entries per tensor, 0 for all")
      ->capture_default_str();

  auto* verify = app.add_subcommand("verify-oracle", "library vs naive oracle on random cases");
  verify->add_option("--cases", cases, "cases per quantity")->capture_default_str();
  verify->add_option("--seed", oracle_seed, "case seed")->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "trimix: error: " << e.what() << '\n';
    return kFailure;
  }

  try {
    if (*pretrain) return cmd_pretrain(common, resume, out, err);
    if (*knn) return cmd_eval(Protocol::Knn, common, ea, std::nullopt, out, err);
    if (*probe) return cmd_eval(Protocol::Probe, common, ea, std::nullopt, out, err);
    if (*finetune)
      return cmd_eval(Protocol::Finetune, common, ea,
                      fraction_opt->count() ? std::optional<double>(fraction) : std::nullopt, out, err);
    if (*exporter) return cmd_export(common, ea, split, out, err);
    if (*gradcheck) return cmd_gradcheck(common, lambda, gopts, out, err);
    if (*verify) return cmd_verify(cases, oracle_seed, out);
  } catch (const NumericError& e) {
    err << "trimix: numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    err << "trimix: error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}

}  // namespace trimix::cli
