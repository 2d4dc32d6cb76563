#include "ltlab/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>

#include "ltlab/analysis.hpp"
#include "ltlab/config.hpp"
#include "ltlab/data.hpp"
#include "ltlab/format.hpp"
#include "ltlab/metrics.hpp"
#include "ltlab/rng.hpp"
#include "ltlab/training.hpp"

namespace ltlab {
namespace {

namespace fs = std::filesystem;

constexpr double kUnsetDouble = std::numeric_limits<double>::quiet_NaN();

bool is_set(double flag) { return !std::isnan(flag); }

double parse_double_strict(const std::string& s) {
  if (s == "auto") return kUnsetDouble;
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::logic_error&) {
    throw InvalidArgumentError("bad number '" + s + "'");
  }
  if (used != s.size()) throw InvalidArgumentError("bad number '" + s + "'");
  return v;
}

long parse_long_strict(const std::string& s) {
  std::size_t used = 0;
  long v = 0;
  try {
    v = std::stol(s, &used);
  } catch (const std::logic_error&) {
    throw InvalidArgumentError("bad integer '" + s + "'");
  }
  if (used != s.size()) throw InvalidArgumentError("bad integer '" + s + "'");
  return v;
}

bool parse_bool_strict(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw InvalidArgumentError("bad boolean '" + s + "'");
}

std::vector<double> parse_double_list(const std::string& csv) {
  std::vector<double> out;
  for (const auto& tok : split_char(csv, ','))
    out.push_back(parse_double_strict(tok));
  return out;
}

// Ties a [section] key of the run-config file to a flag variable; the flag
// wins when both are given.
struct Bindings {
  struct Entry {
    std::string section, key;
    std::function<void(const std::string&)> set;
    CLI::Option* opt = nullptr;
  };
  std::vector<Entry> entries;
  std::set<std::string> from_config;

  void add(CLI::Option* opt, std::string section, std::string key,
           std::function<void(const std::string&)> set) {
    entries.push_back(
        Entry{std::move(section), std::move(key), std::move(set), opt});
  }
  void add_double(CLI::Option* opt, const std::string& sec,
                  const std::string& key, double& var) {
    add(opt, sec, key,
        [&var](const std::string& v) { var = parse_double_strict(v); });
  }
  void add_int(CLI::Option* opt, const std::string& sec,
               const std::string& key, int& var) {
    add(opt, sec, key, [&var](const std::string& v) {
      var = static_cast<int>(parse_long_strict(v));
    });
  }
  void add_uint64(CLI::Option* opt, const std::string& sec,
                  const std::string& key, std::uint64_t& var) {
    add(opt, sec, key, [&var](const std::string& v) {
      try {
        var = static_cast<std::uint64_t>(std::stoull(v));
      } catch (const std::logic_error&) {
        throw InvalidArgumentError("bad seed '" + v + "'");
      }
    });
  }
  void add_string(CLI::Option* opt, const std::string& sec,
                  const std::string& key, std::string& var) {
    add(opt, sec, key, [&var](const std::string& v) { var = v; });
  }
  void add_bool(CLI::Option* opt, const std::string& sec,
                const std::string& key, bool& var) {
    add(opt, sec, key,
        [&var](const std::string& v) { var = parse_bool_strict(v); });
  }

  void apply(const std::vector<ConfigEntry>& config) {
    for (const auto& entry : config) {
      const Entry* match = nullptr;
      for (const auto& binding : entries) {
        if (binding.section == entry.section && binding.key == entry.key) {
          match = &binding;
          break;
        }
      }
      if (!match)
        throw InvalidArgumentError("unknown config key [" + entry.section +
                                   "] " + entry.key);
      if (match->opt && match->opt->count() > 0) continue;  // flag wins
      match->set(entry.value);
      from_config.insert(entry.section + "." + entry.key);
    }
  }
  bool provided(const CLI::Option* opt, const std::string& sec,
                const std::string& key) const {
    return (opt && opt->count() > 0) || from_config.count(sec + "." + key) > 0;
  }
};

void write_file(const fs::path& dir, const std::string& name,
                const std::string& content) {
  fs::create_directories(dir);
  std::ofstream f(dir / name, std::ios::binary);
  if (!f) throw IngestionError("cannot write " + (dir / name).string());
  f << content;
}

// The only artifact that may carry wall-clock time.
void append_log(const fs::path& dir, const std::string& message) {
  fs::create_directories(dir);
  std::ofstream f(dir / "run.log", std::ios::app);
  const auto now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%d %H:%M:%S", std::gmtime(&now));
  f << stamp << " " << message << "\n";
}

std::string bool_name(bool v) { return v ? "true" : "false"; }

// ---------------------------------------------------------------- data flags

struct DataFlags {
  std::string train_file, test_file;
  int many_threshold = kDefaultManyThreshold;
  int few_threshold = kDefaultFewThreshold;
  CLI::Option* many_opt = nullptr;
  CLI::Option* few_opt = nullptr;
};

void add_data_flags(CLI::App* cmd, Bindings& b, DataFlags& f,
                    bool test_required) {
  auto* train =
      cmd->add_option("--train-file", f.train_file, "LTFEAT training features")
          ->required();
  auto* test =
      cmd->add_option("--test-file", f.test_file, "LTFEAT eval features");
  if (test_required) test->required();
  f.many_opt = cmd->add_option("--many-threshold", f.many_threshold,
                               "count above which a class is Many");
  f.few_opt = cmd->add_option("--few-threshold", f.few_threshold,
                              "count below which a class is Few");
  b.add_string(train, "data", "train_file", f.train_file);
  b.add_string(test, "data", "test_file", f.test_file);
  b.add_int(f.many_opt, "data", "many_threshold", f.many_threshold);
  b.add_int(f.few_opt, "data", "few_threshold", f.few_threshold);
}

// Explicit flags/config win; otherwise the feature file's sidecar manifest
// may override the defaults.
void resolve_thresholds(const Bindings& b, DataFlags& f) {
  const Manifest manifest = load_manifest(f.train_file);
  if (!b.provided(f.many_opt, "data", "many_threshold") &&
      manifest.many_threshold)
    f.many_threshold = *manifest.many_threshold;
  if (!b.provided(f.few_opt, "data", "few_threshold") && manifest.few_threshold)
    f.few_threshold = *manifest.few_threshold;
}

std::string dump_data_section(const DataFlags& f) {
  std::string out = "[data]\n";
  out += "train_file=" + f.train_file + "\n";
  out += "test_file=" + f.test_file + "\n";
  out += "many_threshold=" + std::to_string(f.many_threshold) + "\n";
  out += "few_threshold=" + std::to_string(f.few_threshold) + "\n";
  return out;
}

// ---------------------------------------------------------------- loss flags

struct LossFlags {
  std::string method = "ce";
  double delta = kUnsetDouble;
  double gamma = kUnsetDouble;
  double beta = kUnsetDouble;
  double margin_c = kUnsetDouble;
  bool resample = false;
  CLI::Option* delta_opt = nullptr;
  CLI::Option* gamma_opt = nullptr;
  CLI::Option* beta_opt = nullptr;
  CLI::Option* tau_opt = nullptr;
};

void add_loss_flags(CLI::App* cmd, Bindings& b, LossFlags& f) {
  auto* method = cmd->add_option("--loss", f.method,
                                 "one of ce,lort,focal,cb-ce,cb-bce,ldam,bs");
  f.delta_opt =
      cmd->add_option("--delta", f.delta, "retargeted smooth value in [0,1)");
  f.gamma_opt =
      cmd->add_option("--gamma", f.gamma, "focal exponent / margin exponent");
  f.beta_opt =
      cmd->add_option("--beta", f.beta, "class-balanced beta in [0,1)");
  auto* c = cmd->add_option("--c", f.margin_c,
                            "margin constant; omit to calibrate from data");
  auto* rs = cmd->add_flag("--resample", f.resample,
                           "draw classes uniformly during training");
  b.add_string(method, "loss", "method", f.method);
  b.add_double(f.delta_opt, "loss", "delta", f.delta);
  b.add_double(f.gamma_opt, "loss", "gamma", f.gamma);
  b.add_double(f.beta_opt, "loss", "beta", f.beta);
  b.add_double(c, "loss", "c", f.margin_c);
  b.add_bool(rs, "loss", "use_resampling", f.resample);
}

LossSpec build_loss_spec(const LossFlags& f) {
  LossSpec spec = make_loss_spec(parse_loss_method(f.method));
  if (is_set(f.delta)) spec.delta = f.delta;
  if (is_set(f.gamma)) spec.gamma = f.gamma;
  if (is_set(f.beta)) spec.beta = f.beta;
  if (is_set(f.margin_c)) spec.ldam_c = f.margin_c;
  if (f.resample) spec.use_resampling = true;
  validate(spec);
  return spec;
}

std::string dump_loss_section(const LossSpec& spec) {
  std::string out = "[loss]\n";
  out += "method=" + std::string(loss_method_name(spec.method)) + "\n";
  out += "delta=" + format_short(spec.delta) + "\n";
  out += "gamma=" + format_short(spec.gamma) + "\n";
  out += "beta=" + format_short(spec.beta) + "\n";
  out += "c=" +
         (spec.ldam_c ? format_short(*spec.ldam_c) : std::string("auto")) +
         "\n";
  out += "use_resampling=" + bool_name(spec.use_resampling) + "\n";
  return out;
}

// --------------------------------------------------------------- train flags

struct TrainFlags {
  int epochs = 20;
  int batch = 64;
  double lr = 0.1;
  double wd = 0.0;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  std::string sampler = "shuffle";
  double maxnorm = 0.0;  // 0 disables the projection
  double cosine_scale = kDefaultCosineScale;
  std::string head = "linear";
};

void add_train_flags(CLI::App* cmd, Bindings& b, TrainFlags& f) {
  auto* epochs = cmd->add_option("--epochs", f.epochs, "training epochs");
  auto* batch = cmd->add_option("--batch", f.batch, "batch size");
  auto* lr = cmd->add_option("--lr", f.lr, "initial learning rate");
  auto* wd = cmd->add_option("--wd", f.wd, "weight decay on W");
  auto* momentum = cmd->add_option("--momentum", f.momentum, "SGD momentum");
  auto* seed = cmd->add_option("--seed", f.seed, "master RNG seed");
  auto* sampler =
      cmd->add_option("--sampler", f.sampler, "shuffle or class-balanced");
  auto* maxnorm =
      cmd->add_option("--maxnorm", f.maxnorm, "weight row norm cap; 0 disables");
  auto* scale =
      cmd->add_option("--cosine-scale", f.cosine_scale, "cosine head scale");
  auto* head = cmd->add_option("--head", f.head, "linear, cosine or lws");
  b.add_int(epochs, "train", "epochs", f.epochs);
  b.add_int(batch, "train", "batch", f.batch);
  b.add_double(lr, "train", "lr", f.lr);
  b.add_double(wd, "train", "wd", f.wd);
  b.add_double(momentum, "train", "momentum", f.momentum);
  b.add_uint64(seed, "train", "seed", f.seed);
  b.add_string(sampler, "train", "sampler", f.sampler);
  b.add_double(maxnorm, "train", "maxnorm", f.maxnorm);
  b.add_double(scale, "train", "cosine_scale", f.cosine_scale);
  b.add_string(head, "train", "head", f.head);
}

TrainConfig build_train_config(const TrainFlags& f) {
  TrainConfig cfg;
  cfg.epochs = f.epochs;
  cfg.batch_size = f.batch;
  cfg.lr0 = f.lr;
  cfg.weight_decay = f.wd;
  cfg.momentum = f.momentum;
  cfg.seed = f.seed;
  cfg.sampler = parse_sampler(f.sampler);
  if (f.maxnorm != 0.0) cfg.maxnorm = f.maxnorm;
  cfg.cosine_scale = f.cosine_scale;
  cfg.head = parse_head(f.head);
  validate(cfg);
  return cfg;
}

std::string dump_train_section(const TrainFlags& f) {
  std::string out = "[train]\n";
  out += "epochs=" + std::to_string(f.epochs) + "\n";
  out += "batch=" + std::to_string(f.batch) + "\n";
  out += "lr=" + format_short(f.lr) + "\n";
  out += "wd=" + format_short(f.wd) + "\n";
  out += "momentum=" + format_short(f.momentum) + "\n";
  out += "seed=" + std::to_string(f.seed) + "\n";
  out += "sampler=" + f.sampler + "\n";
  out += "maxnorm=" + format_short(f.maxnorm) + "\n";
  out += "cosine_scale=" + format_short(f.cosine_scale) + "\n";
  out += "head=" + f.head + "\n";
  return out;
}

// ------------------------------------------------------------- posthoc flags

struct PosthocFlags {
  std::string kind = "none";
  double tau = 1.0;
};

void add_posthoc_flags(CLI::App* cmd, Bindings& b, PosthocFlags& f) {
  auto* kind =
      cmd->add_option("--posthoc", f.kind, "none, tau-norm or logit-adjust");
  auto* tau = cmd->add_option("--tau", f.tau, "posthoc strength");
  b.add_string(kind, "posthoc", "kind", f.kind);
  b.add_double(tau, "posthoc", "tau", f.tau);
}

PosthocSpec build_posthoc(const PosthocFlags& f) {
  if (!std::isfinite(f.tau) || f.tau < 0.0)
    throw InvalidArgumentError("tau must be finite and >= 0");
  return PosthocSpec{parse_posthoc(f.kind), f.tau};
}

std::string dump_posthoc_section(const PosthocFlags& f) {
  return "[posthoc]\nkind=" + f.kind + "\ntau=" + format_short(f.tau) + "\n";
}

// ------------------------------------------------------------------ commands

struct CommonCmd {
  std::string out_dir;
  std::string config_path;
  Bindings bindings;
};

void add_common(CLI::App* cmd, CommonCmd& common) {
  cmd->add_option("--out", common.out_dir, "output directory")->required();
  cmd->add_option("--config", common.config_path,
                  "key=value run-config file; flags override it");
}

void apply_config(CommonCmd& common) {
  if (common.config_path.empty()) return;
  common.bindings.apply(parse_config_file(common.config_path));
}

void emit_resolved(const CommonCmd& common, const std::string& body) {
  write_file(common.out_dir, "resolved_config.txt", body);
}

// ------------------------------------------------------------------- gen

struct GenCmd {
  CommonCmd common;
  int k = 10, d = 8, nmax = 100, test_per_class = 20;
  double ir = 10.0, separation = 3.0, within_std = 1.0;
  std::uint64_t seed = 0;
};

int run_gen(GenCmd& c) {
  apply_config(c.common);
  SyntheticSpec spec;
  spec.num_classes = c.k;
  spec.dim = c.d;
  spec.n_max = c.nmax;
  spec.imbalance_ratio = c.ir;
  spec.test_per_class = c.test_per_class;
  spec.class_separation = c.separation;
  spec.within_std = c.within_std;
  spec.seed = c.seed;
  validate(spec);
  const DatasetPair pair = generate_synthetic(spec);
  write_file(c.common.out_dir, "train.ltfeat", serialize_features(pair.train));
  write_file(c.common.out_dir, "test.ltfeat", serialize_features(pair.test));
  std::string resolved = "[data]\n";
  resolved += "k=" + std::to_string(c.k) + "\n";
  resolved += "d=" + std::to_string(c.d) + "\n";
  resolved += "nmax=" + std::to_string(c.nmax) + "\n";
  resolved += "ir=" + format_short(c.ir) + "\n";
  resolved += "test_per_class=" + std::to_string(c.test_per_class) + "\n";
  resolved += "separation=" + format_short(c.separation) + "\n";
  resolved += "within_std=" + format_short(c.within_std) + "\n";
  resolved += "seed=" + std::to_string(c.seed) + "\n";
  emit_resolved(c.common, resolved);
  append_log(c.common.out_dir, "gen: wrote train.ltfeat and test.ltfeat");
  std::cout << "wrote " << c.common.out_dir << "/train.ltfeat ("
            << pair.train.rows() << " rows) and test.ltfeat ("
            << pair.test.rows() << " rows)\n";
  return 0;
}

void setup_gen(CLI::App& app, GenCmd& c, int& result) {
  auto* cmd = app.add_subcommand("gen", "generate a synthetic dataset");
  add_common(cmd, c.common);
  Bindings& b = c.common.bindings;
  b.add_int(cmd->add_option("--k", c.k, "class count"), "data", "k", c.k);
  b.add_int(cmd->add_option("--d", c.d, "feature dimension"), "data", "d",
            c.d);
  b.add_int(cmd->add_option("--nmax", c.nmax, "largest class count"), "data",
            "nmax", c.nmax);
  b.add_double(cmd->add_option("--ir", c.ir, "imbalance ratio >= 1"), "data",
               "ir", c.ir);
  b.add_int(cmd->add_option("--test-per-class", c.test_per_class,
                            "balanced test samples per class"),
            "data", "test_per_class", c.test_per_class);
  b.add_double(cmd->add_option("--separation", c.separation,
                               "distance between cluster means"),
               "data", "separation", c.separation);
  b.add_double(cmd->add_option("--within-std", c.within_std,
                               "within-cluster standard deviation"),
               "data", "within_std", c.within_std);
  b.add_uint64(cmd->add_option("--seed", c.seed, "generator seed"), "data",
               "seed", c.seed);
  cmd->callback([&c, &result] { result = run_gen(c); });
}

// ------------------------------------------------------------------- train

struct TrainCmd {
  CommonCmd common;
  DataFlags data;
  LossFlags loss;
  TrainFlags train;
  PosthocFlags posthoc;
};

int run_train(TrainCmd& c) {
  apply_config(c.common);
  const LossSpec spec = build_loss_spec(c.loss);
  const TrainConfig cfg = build_train_config(c.train);
  const PosthocSpec posthoc = build_posthoc(c.posthoc);
  resolve_thresholds(c.common.bindings, c.data);

  const FeatureDataset train_ds = load_features(c.data.train_file);
  std::optional<FeatureDataset> test_ds;
  if (!c.data.test_file.empty()) test_ds = load_features(c.data.test_file);

  const TrainResult result = train_classifier(
      train_ds, spec, cfg, test_ds ? &*test_ds : nullptr, nullptr);

  write_file(c.common.out_dir, "classifier.ltcls",
             serialize_checkpoint(result.params));
  write_file(c.common.out_dir, "history.csv", history_csv(result.history));
  if (test_ds) {
    const ClassStats stats =
        class_stats(train_ds, c.data.many_threshold, c.data.few_threshold);
    const MetricsReport report = compute_metrics(result.params, posthoc,
                                                 *test_ds, stats,
                                                 cfg.cosine_scale);
    write_file(c.common.out_dir, "metrics.txt", metrics_keyvalue(report));
    write_file(c.common.out_dir, "metrics.csv", metrics_csv(report));
    write_file(c.common.out_dir, "metrics_binned.csv",
               metrics_binned_csv(report));
    std::cout << "acc_all=" << format_short(report.accuracy.all) << "\n";
  }
  emit_resolved(c.common, dump_data_section(c.data) + dump_loss_section(spec) +
                              dump_train_section(c.train) +
                              dump_posthoc_section(c.posthoc));
  append_log(c.common.out_dir, "train: wrote classifier.ltcls");
  return 0;
}

void setup_train(CLI::App& app, TrainCmd& c, int& result) {
  auto* cmd =
      app.add_subcommand("train", "retrain a classifier head on features");
  add_common(cmd, c.common);
  add_data_flags(cmd, c.common.bindings, c.data, false);
  add_loss_flags(cmd, c.common.bindings, c.loss);
  add_train_flags(cmd, c.common.bindings, c.train);
  add_posthoc_flags(cmd, c.common.bindings, c.posthoc);
  cmd->callback([&c, &result] { result = run_train(c); });
}

// ------------------------------------------------------------- eval/metrics

struct EvalCmd {
  CommonCmd common;
  DataFlags data;
  PosthocFlags posthoc;
  std::string checkpoint;
  double cosine_scale = kDefaultCosineScale;
  bool full_metrics = false;
};

int run_eval(EvalCmd& c) {
  apply_config(c.common);
  const PosthocSpec posthoc = build_posthoc(c.posthoc);
  resolve_thresholds(c.common.bindings, c.data);
  const ClassifierParams params = load_checkpoint(c.checkpoint);
  const FeatureDataset train_ds = load_features(c.data.train_file);
  const FeatureDataset test_ds = load_features(c.data.test_file);
  const ClassStats stats =
      class_stats(train_ds, c.data.many_threshold, c.data.few_threshold);
  if (c.full_metrics) {
    const MetricsReport report =
        compute_metrics(params, posthoc, test_ds, stats, c.cosine_scale);
    write_file(c.common.out_dir, "metrics.txt", metrics_keyvalue(report));
    write_file(c.common.out_dir, "metrics.csv", metrics_csv(report));
    write_file(c.common.out_dir, "metrics_binned.csv",
               metrics_binned_csv(report));
    std::cout << metrics_keyvalue(report);
  } else {
    const GroupAccuracy acc =
        group_accuracy(params, posthoc, test_ds, stats, c.cosine_scale);
    const auto line = [](const char* key, const std::optional<double>& v) {
      return std::string(key) + "=" +
             (v ? format_short(*v) : std::string("absent")) + "\n";
    };
    std::string text = "acc_all=" + format_short(acc.all) + "\n";
    text += line("acc_many", acc.many);
    text += line("acc_medium", acc.medium);
    text += line("acc_few", acc.few);
    write_file(c.common.out_dir, "eval.txt", text);
    std::cout << text;
  }
  emit_resolved(c.common,
                dump_data_section(c.data) + dump_posthoc_section(c.posthoc));
  append_log(c.common.out_dir, c.full_metrics ? "metrics: wrote metrics.csv"
                                              : "eval: wrote eval.txt");
  return 0;
}

void setup_eval(CLI::App& app, EvalCmd& c, bool full_metrics, int& result) {
  auto* cmd = app.add_subcommand(
      full_metrics ? "metrics" : "eval",
      full_metrics ? "emit the full per-class metrics report"
                   : "report group accuracies for a checkpoint");
  c.full_metrics = full_metrics;
  add_common(cmd, c.common);
  add_data_flags(cmd, c.common.bindings, c.data, true);
  cmd->add_option("--checkpoint", c.checkpoint, "LTCLS classifier file")
      ->required();
  cmd->add_option("--cosine-scale", c.cosine_scale, "cosine head scale");
  add_posthoc_flags(cmd, c.common.bindings, c.posthoc);
  cmd->callback([&c, &result] { result = run_eval(c); });
}

// ------------------------------------------------------------------- verify

struct VerifyCmd {
  CommonCmd common;
  long trials = 0;  // 0 keeps the documented defaults
  std::uint64_t seed = 0;
  bool negate_hessian = false;
};

struct CheckLine {
  std::string name;
  std::string cmp;  // "le" or "ge"
  double tolerance;
  double observed;
  bool reduced;
  bool pass() const {
    return cmp == "le" ? observed <= tolerance : observed >= tolerance;
  }
};

int run_verify(VerifyCmd& c) {
  apply_config(c.common);
  if (c.trials < 0) throw InvalidArgumentError("trials must be >= 0");
  std::vector<CheckLine> checks;
  const bool reduced = c.trials > 0;
  const auto add = [&](std::string name, std::string cmp, double tol,
                       double observed, bool mc) {
    checks.push_back(CheckLine{std::move(name), std::move(cmp), tol, observed,
                               mc && reduced});
  };

  // analytic gradients vs central finite differences, every method and head
  const int grad_trials =
      reduced ? std::max(1L, c.trials / 5) : 20;  // per (K, D) cell
  const std::pair<int, int> dims[] = {{2, 2}, {3, 2}, {5, 4}, {8, 8}, {10, 6}};
  const LossMethod methods[] = {
      LossMethod::CE,  LossMethod::LORT, LossMethod::Focal,
      LossMethod::ClassBalancedCE,      LossMethod::ClassBalancedBCE,
      LossMethod::LDAM, LossMethod::BalancedSoftmax};
  const Head heads[] = {Head::Linear, Head::Cosine, Head::LWS};
  for (const auto method : methods) {
    for (const auto head : heads) {
      LossSpec spec = make_loss_spec(method);
      double worst = 0.0;
      int cell = 0;
      for (const auto& [k, d] : dims) {
        worst = std::max(
            worst, gradcheck(spec, head, k, d, static_cast<int>(grad_trials),
                             1e-5, derive_seed(c.seed, "gradcheck" +
                                                           std::to_string(cell++))));
      }
      add(std::string("gradcheck_") + loss_method_name(method) + "_" +
              head_name(head),
          "le", 1e-6, worst, true);
    }
  }

  // bias Hessian: PSD over random directions, exact zero along all-ones
  {
    const long n_probs = reduced ? c.trials : 1000;
    const int n_dirs = static_cast<int>(reduced ? c.trials : 1000);
    Rng rng(derive_seed(c.seed, "hessian"));
    double min_norm_form = std::numeric_limits<double>::infinity();
    double worst_ones = 0.0;
    for (long t = 0; t < n_probs; ++t) {
      const int k = 2 + static_cast<int>(rng.uniform_index(49));
      Eigen::VectorXd s(k);
      for (int i = 0; i < k; ++i) s(i) = -std::log(1.0 - rng.uniform01());
      s /= s.sum();
      Eigen::MatrixXd h = bias_hessian(s);
      if (c.negate_hessian) h = -h;
      const double form = psd_check(h, n_dirs, rng.bits());
      min_norm_form = std::min(min_norm_form, form / k);
      const Eigen::VectorXd ones = Eigen::VectorXd::Ones(k);
      worst_ones =
          std::max(worst_ones, std::abs(ones.dot(h * ones)) / k);
    }
    add("hessian_psd_min_form_per_k", "ge", -1e-12, min_norm_form, true);
    add("hessian_allones_zero_per_k", "le", 1e-15, worst_ones, true);
  }

  // common row shift: probabilities pinned, weight norms not
  {
    SyntheticSpec sspec;
    sspec.num_classes = 10;
    sspec.dim = 8;
    sspec.n_max = 60;
    sspec.imbalance_ratio = 10;
    sspec.test_per_class = 10;
    sspec.seed = derive_seed(c.seed, "shift-data");
    const DatasetPair pair = generate_synthetic(sspec);
    Rng rng(derive_seed(c.seed, "shift"));
    Eigen::MatrixXd w(sspec.num_classes, sspec.dim);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j)
        w(i, j) = rng.uniform(-1.0, 1.0);
    Eigen::VectorXd bias(sspec.num_classes);
    for (Eigen::Index i = 0; i < bias.size(); ++i)
      bias(i) = rng.uniform(-0.5, 0.5);
    const ClassifierParams params = make_params(
        w, bias, Eigen::VectorXd::Ones(sspec.num_classes), Head::Linear);
    Eigen::VectorXd eps(sspec.dim);
    for (Eigen::Index j = 0; j < eps.size(); ++j) eps(j) = rng.normal();
    eps *= 10.0 / eps.norm();
    add("row_shift_probability", "le", 1e-12,
        shift_invariance_check(params, pair.test, eps), false);
    ClassifierParams shifted = params;
    shifted.weights.rowwise() += eps.transpose();
    const double min_norm_change =
        (weight_norms(shifted) - weight_norms(params)).cwiseAbs().minCoeff();
    add("row_shift_weight_norms", "ge", 1.0, min_norm_change, false);
  }

  // normal-perturbation algebra
  {
    const long mc = reduced ? c.trials * 1000 : 1000000;
    const double est =
        lognormal_mean_estimate(0.5, mc, derive_seed(c.seed, "logn"));
    const double expected = std::exp(0.125);
    add("lognormal_identity_rel_dev", "le", 0.01,
        std::abs(est - expected) / expected, true);

    PerturbationSpec pspec;
    pspec.xi_std = 0.5;
    pspec.trials = mc;
    pspec.seed = derive_seed(c.seed, "balanced");
    const int k = 10;
    const Eigen::MatrixXd base = Eigen::MatrixXd::Zero(1, k);
    const Eigen::VectorXd ell = Eigen::VectorXd::Ones(k);
    const Eigen::VectorXd r = Eigen::VectorXd::Constant(k, 0.5);
    add("perturbation_balanced_spread", "le", 0.02,
        perturbation_sim(ell, r, pspec, base).spread, true);
    pspec.xi_std = 0.0;
    add("perturbation_zero_noise", "le", 0.0,
        (perturbation_sim(ell, r, pspec, base).ratios.array() - 1.0)
            .abs()
            .maxCoeff(),
        false);
  }

  // retargeted-label algebra
  {
    double worst_sum = 0.0;
    double min_margin = std::numeric_limits<double>::infinity();
    for (const double delta : {0.0, 0.2, 0.5, 0.9, 0.98, 0.99}) {
      for (const int k : {2, 5, 20}) {
        const TargetDistribution t = lort_targets(k, k / 2, delta);
        worst_sum = std::max(worst_sum, std::abs(t.sum() - 1.0));
        double max_neg = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < k; ++i)
          if (i != k / 2) max_neg = std::max(max_neg, t(i));
        min_margin = std::min(min_margin, t(k / 2) - max_neg);
      }
    }
    add("lort_target_sum_dev", "le", 1e-12, worst_sum, false);
    add("lort_target_margin", "ge", 1e-6, min_margin, false);
  }

  // identity reductions onto the vanilla path
  {
    Rng rng(derive_seed(c.seed, "reduce"));
    const int k = 6, d = 4, instances = 50;
    double lort0 = 0.0, bs_eq = 0.0, focal0 = 0.0, cb0 = 0.0;
    double tau0 = 0.0, la0 = 0.0;
    for (int t = 0; t < instances; ++t) {
      Eigen::MatrixXd w(k, d);
      for (Eigen::Index i = 0; i < w.rows(); ++i)
        for (Eigen::Index j = 0; j < w.cols(); ++j)
          w(i, j) = rng.uniform(-1.0, 1.0);
      Eigen::VectorXd bias(k);
      for (int i = 0; i < k; ++i) bias(i) = rng.uniform(-0.5, 0.5);
      const ClassifierParams params =
          make_params(w, bias, Eigen::VectorXd::Ones(k), Head::Linear);
      Eigen::VectorXd x(d);
      for (int j = 0; j < d; ++j) x(j) = rng.uniform(-1.0, 1.0);
      const int y = static_cast<int>(rng.uniform_index(k));
      const ClassStats eq_stats = stats_from_counts(std::vector<int>(k, 37));

      const LossSpec ce = make_loss_spec(LossMethod::CE);
      const double ce_loss =
          per_sample_loss_and_grad(ce, params, eq_stats, x, y).loss;

      LossSpec lort = make_loss_spec(LossMethod::LORT);
      lort.delta = 0.0;
      lort0 = std::max(lort0,
                       std::abs(per_sample_loss_and_grad(lort, params,
                                                         eq_stats, x, y)
                                    .loss -
                                ce_loss));
      bs_eq = std::max(
          bs_eq, std::abs(per_sample_loss_and_grad(
                              make_loss_spec(LossMethod::BalancedSoftmax),
                              params, eq_stats, x, y)
                              .loss -
                          ce_loss));
      LossSpec focal = make_loss_spec(LossMethod::Focal);
      focal.gamma = 0.0;
      focal0 = std::max(focal0,
                        std::abs(per_sample_loss_and_grad(focal, params,
                                                          eq_stats, x, y)
                                     .loss -
                                 ce_loss));
      LossSpec cb = make_loss_spec(LossMethod::ClassBalancedCE);
      cb.beta = 0.0;
      cb0 = std::max(
          cb0, std::abs(per_sample_loss_and_grad(cb, params, eq_stats, x, y)
                            .loss -
                        ce_loss));

      const Eigen::VectorXd z = forward_logits(params, x, 1.0);
      const Eigen::VectorXd h_tau = posthoc_adjust(
          params, z, PosthocSpec{PosthocKind::TauNorm, 0.0}, eq_stats, x);
      tau0 = std::max(tau0,
                      (h_tau - params.weights * x).cwiseAbs().maxCoeff());
      const Eigen::VectorXd h_la = posthoc_adjust(
          params, z, PosthocSpec{PosthocKind::LogitAdjust, 0.0}, eq_stats, x);
      la0 = std::max(la0, (h_la - z).cwiseAbs().maxCoeff());
    }
    add("reduce_lort0_equals_ce", "le", 0.0, lort0, false);
    add("reduce_bs_equal_counts", "le", 1e-12, bs_eq, false);
    add("reduce_focal_gamma0", "le", 0.0, focal0, false);
    add("reduce_cb_beta0", "le", 0.0, cb0, false);
    add("reduce_taunorm_tau0", "le", 1e-12, tau0, false);
    add("reduce_logitadjust_tau0", "le", 0.0, la0, false);
  }

  std::string report;
  int failures = 0;
  for (const auto& check : checks) {
    if (!check.pass()) ++failures;
    report += "check=" + check.name + " cmp=" + check.cmp +
              " tolerance=" + format_short(check.tolerance) +
              " observed=" + format_short(check.observed) +
              " status=" + (check.pass() ? "PASS" : "FAIL");
    if (check.reduced) report += " confidence=reduced";
    report += "\n";
  }
  report += "result=" + std::string(failures == 0 ? "PASS" : "FAIL") +
            " checks=" + std::to_string(checks.size()) +
            " failures=" + std::to_string(failures) + "\n";
  write_file(c.common.out_dir, "verify_report.txt", report);
  emit_resolved(c.common, "[train]\nseed=" + std::to_string(c.seed) +
                              "\n[sweep]\ntrials=" +
                              std::to_string(c.trials) + "\n");
  std::cout << report;
  append_log(c.common.out_dir,
             "verify: " + std::to_string(failures) + " failures");
  return failures == 0 ? 0 : 1;
}

void setup_verify(CLI::App& app, VerifyCmd& c, int& result) {
  auto* cmd = app.add_subcommand("verify", "run the numeric property suite");
  add_common(cmd, c.common);
  Bindings& b = c.common.bindings;
  b.add_uint64(cmd->add_option("--seed", c.seed, "suite seed"), "train",
               "seed", c.seed);
  auto* trials = cmd->add_option(
      "--trials", c.trials,
      "override Monte Carlo budgets (marks reduced confidence)");
  b.add(trials, "sweep", "trials", [&c](const std::string& v) {
    c.trials = parse_long_strict(v);
  });
  cmd->add_flag("--negate-hessian", c.negate_hessian,
                "fault-injection hook: flips the Hessian sign");
  cmd->callback([&c, &result] { result = run_verify(c); });
}

// -------------------------------------------------------------- sweep/grid

struct SweepCmd {
  CommonCmd common;
  DataFlags data;
  TrainFlags train;
  std::string deltas = "0,0.2,0.5,0.8,0.9,0.98,0.99";
  int jobs = 1;
};

int run_sweep(SweepCmd& c) {
  apply_config(c.common);
  resolve_thresholds(c.common.bindings, c.data);
  const TrainConfig cfg = build_train_config(c.train);
  const FeatureDataset train_ds = load_features(c.data.train_file);
  const FeatureDataset test_ds = load_features(c.data.test_file);
  const SweepResult result = delta_sweep(
      train_ds, test_ds, parse_double_list(c.deltas), cfg, c.jobs);
  write_file(c.common.out_dir, "delta_sweep.csv", delta_sweep_csv(result));
  emit_resolved(c.common, dump_data_section(c.data) +
                              dump_train_section(c.train) + "[sweep]\ndeltas=" +
                              c.deltas + "\njobs=" + std::to_string(c.jobs) +
                              "\n");
  append_log(c.common.out_dir, "sweep: wrote delta_sweep.csv");
  std::cout << delta_sweep_csv(result);
  return 0;
}

void setup_sweep(CLI::App& app, SweepCmd& c, int& result) {
  auto* cmd =
      app.add_subcommand("sweep", "train one retargeted head per smooth value");
  add_common(cmd, c.common);
  add_data_flags(cmd, c.common.bindings, c.data, true);
  add_train_flags(cmd, c.common.bindings, c.train);
  Bindings& b = c.common.bindings;
  b.add_string(cmd->add_option("--deltas", c.deltas, "comma-separated values"),
               "sweep", "deltas", c.deltas);
  b.add_int(cmd->add_option("--jobs", c.jobs, "parallel sweep cells"), "sweep",
            "jobs", c.jobs);
  cmd->callback([&c, &result] { result = run_sweep(c); });
}

struct GridCmd {
  CommonCmd common;
  DataFlags data;
  LossFlags loss;
  TrainFlags train;
  std::string lrs = "0.003,0.01,0.03,0.1,0.3";
  std::string wds = "0,1e-4,5e-4,1e-3";
  int jobs = 1;
};

int run_grid(GridCmd& c) {
  apply_config(c.common);
  resolve_thresholds(c.common.bindings, c.data);
  const LossSpec spec = build_loss_spec(c.loss);
  const TrainConfig cfg = build_train_config(c.train);
  const FeatureDataset train_ds = load_features(c.data.train_file);
  const FeatureDataset test_ds = load_features(c.data.test_file);
  const SweepResult result =
      lr_wd_grid(train_ds, test_ds, parse_double_list(c.lrs),
                 parse_double_list(c.wds), cfg, spec, c.jobs);
  write_file(c.common.out_dir, "lr_wd_grid.csv", grid_csv(result));
  emit_resolved(c.common,
                dump_data_section(c.data) + dump_loss_section(spec) +
                    dump_train_section(c.train) + "[sweep]\nlrs=" + c.lrs +
                    "\nwds=" + c.wds + "\njobs=" + std::to_string(c.jobs) +
                    "\n");
  append_log(c.common.out_dir, "grid: wrote lr_wd_grid.csv");
  std::cout << grid_csv(result);
  return 0;
}

void setup_grid(CLI::App& app, GridCmd& c, int& result) {
  auto* cmd = app.add_subcommand(
      "grid", "learning-rate x weight-decay sensitivity grid");
  add_common(cmd, c.common);
  add_data_flags(cmd, c.common.bindings, c.data, true);
  add_loss_flags(cmd, c.common.bindings, c.loss);
  add_train_flags(cmd, c.common.bindings, c.train);
  Bindings& b = c.common.bindings;
  b.add_string(cmd->add_option("--lrs", c.lrs, "comma-separated rates"),
               "sweep", "lrs", c.lrs);
  b.add_string(cmd->add_option("--wds", c.wds, "comma-separated decays"),
               "sweep", "wds", c.wds);
  b.add_int(cmd->add_option("--jobs", c.jobs, "parallel grid cells"), "sweep",
            "jobs", c.jobs);
  cmd->callback([&c, &result] { result = run_grid(c); });
}

// ----------------------------------------------------------------- compare

struct CompareCmd {
  CommonCmd common;
  DataFlags data;
  LossFlags loss;
  TrainFlags train;
  PosthocFlags posthoc;
  std::string methods = "ce,cosine,lws,ldam,bs,rs,focal,cb-bce,maxnorm,"
                        "tau-norm,logit-adjust,lort";
  int jobs = 1;
};

int run_compare(CompareCmd& c) {
  apply_config(c.common);
  resolve_thresholds(c.common.bindings, c.data);
  const TrainConfig cfg = build_train_config(c.train);
  const FeatureDataset train_ds = load_features(c.data.train_file);
  const FeatureDataset test_ds = load_features(c.data.test_file);

  std::vector<MethodSpec> specs;
  for (const auto& token : split_char(c.methods, ',')) {
    MethodSpec m = parse_method_token(token);
    if (is_set(c.loss.delta) && m.loss.method == LossMethod::LORT)
      m.loss.delta = c.loss.delta;
    if (is_set(c.loss.gamma) && (m.loss.method == LossMethod::Focal ||
                                 m.loss.method == LossMethod::LDAM))
      m.loss.gamma = c.loss.gamma;
    if (is_set(c.loss.beta) &&
        (m.loss.method == LossMethod::ClassBalancedCE ||
         m.loss.method == LossMethod::ClassBalancedBCE))
      m.loss.beta = c.loss.beta;
    if (is_set(c.loss.margin_c) && m.loss.method == LossMethod::LDAM)
      m.loss.ldam_c = c.loss.margin_c;
    if (c.posthoc.tau != 1.0 && m.posthoc.kind != PosthocKind::None)
      m.posthoc.tau = c.posthoc.tau;
    validate(m.loss);
    specs.push_back(std::move(m));
  }

  const std::vector<MethodRow> rows =
      method_comparison(train_ds, test_ds, specs, cfg, c.jobs);
  write_file(c.common.out_dir, "comparison.csv", comparison_csv(rows));
  for (const auto& row : rows) {
    write_file(c.common.out_dir, "metrics_" + row.spec.name + ".csv",
               metrics_csv(row.report));
    write_file(c.common.out_dir, "metrics_" + row.spec.name + "_binned.csv",
               metrics_binned_csv(row.report));
  }
  emit_resolved(c.common, dump_data_section(c.data) +
                              dump_train_section(c.train) +
                              "[sweep]\nmethods=" + c.methods + "\njobs=" +
                              std::to_string(c.jobs) + "\n");
  append_log(c.common.out_dir, "compare: wrote comparison.csv");
  std::cout << comparison_csv(rows);
  return 0;
}

void setup_compare(CLI::App& app, CompareCmd& c, int& result) {
  auto* cmd = app.add_subcommand(
      "compare", "retrain every named method on shared features");
  add_common(cmd, c.common);
  add_data_flags(cmd, c.common.bindings, c.data, true);
  add_loss_flags(cmd, c.common.bindings, c.loss);
  add_train_flags(cmd, c.common.bindings, c.train);
  add_posthoc_flags(cmd, c.common.bindings, c.posthoc);
  Bindings& b = c.common.bindings;
  b.add_string(cmd->add_option("--methods", c.methods,
                               "comma-separated method tokens"),
               "sweep", "methods", c.methods);
  b.add_int(cmd->add_option("--jobs", c.jobs, "parallel method cells"),
            "sweep", "jobs", c.jobs);
  cmd->callback([&c, &result] { result = run_compare(c); });
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  std::vector<std::string> args;
  args.reserve(static_cast<std::size_t>(argc > 0 ? argc - 1 : 0));
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args);
}

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"desk-scale laboratory for long-tailed classifier retraining",
               "ltlab"};
  app.require_subcommand(1);

  int result = 0;
  GenCmd gen;
  TrainCmd train;
  EvalCmd eval_cmd, metrics_cmd;
  VerifyCmd verify;
  SweepCmd sweep;
  GridCmd grid;
  CompareCmd compare;
  setup_gen(app, gen, result);
  setup_train(app, train, result);
  setup_eval(app, eval_cmd, false, result);
  setup_eval(app, metrics_cmd, true, result);
  setup_verify(app, verify, result);
  setup_sweep(app, sweep, result);
  setup_grid(app, grid, result);
  setup_compare(app, compare, result);

  try {
    // CLI11's vector overload expects reversed arguments
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::CallForHelp& e) {
    app.exit(e);
    return 0;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const InvalidArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return result;
}

}  // namespace ltlab
