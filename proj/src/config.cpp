#include "trimix/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "trimix/error.hpp"

namespace trimix {

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ConfigError("key '" + key + "': '" + v + "' is not a number");
  return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ConfigError("key '" + key + "': '" + v + "' is not a non-negative integer");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError("key '" + key + "': '" + v + "' is not a boolean");
}

std::vector<std::size_t> parse_widths(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(parse_uint(key, trim(tok)));
  if (out.empty()) throw ConfigError("key '" + key + "' needs at least one width");
  return out;
}

std::string fmt_widths(const std::vector<std::size_t>& w) {
  std::string s;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(w[i]);
  }
  return s;
}

struct Field {
  std::string key;
  std::function<void(TriMixConfig&, const std::string&)> set;
  std::function<std::string(const TriMixConfig&)> get;
};

#define TRIMIX_DOUBLE(name, member)                                                         \
  Field {                                                                                   \
    name, [](TriMixConfig& c, const std::string& v) { c.member = parse_double(name, v); }, \
        [](const TriMixConfig& c) { return fmt_double(c.member); }                          \
  }
#define TRIMIX_UINT(name, member)                                                         \
  Field {                                                                                 \
    name, [](TriMixConfig& c, const std::string& v) { c.member = parse_uint(name, v); }, \
        [](const TriMixConfig& c) { return std::to_string(c.member); }                    \
  }
#define TRIMIX_BOOL(name, member)                                                         \
  Field {                                                                                 \
    name, [](TriMixConfig& c, const std::string& v) { c.member = parse_bool(name, v); }, \
        [](const TriMixConfig& c) { return std::string(c.member ? "true" : "false"); }    \
  }
#define TRIMIX_STRING(name, member)                                         \
  Field {                                                                   \
    name, [](TriMixConfig& c, const std::string& v) { c.member = v; },      \
        [](const TriMixConfig& c) { return c.member; }                      \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      TRIMIX_DOUBLE("alpha", alpha),
      TRIMIX_DOUBLE("beta", beta),
      TRIMIX_DOUBLE("gamma", gamma),
      TRIMIX_DOUBLE("tau", tau),
      Field{"lambda_policy", [](TriMixConfig& c, const std::string& v) { c.lambda_policy = LambdaPolicy::parse(v); },
            [](const TriMixConfig& c) { return c.lambda_policy.str(); }},
      TRIMIX_BOOL("enable_vrt", enable_vrt),
      TRIMIX_BOOL("enable_con", enable_con),
      TRIMIX_BOOL("enable_feature_norm", enable_feature_norm),
      Field{"placement", [](TriMixConfig& c, const std::string& v) { c.placement = parse_placement(v); },
            [](const TriMixConfig& c) { return placement_str(c.placement); }},
      TRIMIX_BOOL("normalize_on", normalize_on),
      TRIMIX_BOOL("allow_degenerate", allow_degenerate),
      Field{"encoder_widths",
            [](TriMixConfig& c, const std::string& v) { c.encoder_widths = parse_widths("encoder_widths", v); },
            [](const TriMixConfig& c) { return fmt_widths(c.encoder_widths); }},
      Field{"projector_widths",
            [](TriMixConfig& c, const std::string& v) { c.projector_widths = parse_widths("projector_widths", v); },
            [](const TriMixConfig& c) { return fmt_widths(c.projector_widths); }},
      Field{"activation",
            [](TriMixConfig& c, const std::string& v) {
              if (v == "relu") c.activation = model::Activation::Relu;
              else if (v == "identity") c.activation = model::Activation::Identity;
              else throw ConfigError("key 'activation': expected relu or identity, got '" + v + "'");
            },
            [](const TriMixConfig& c) {
              return std::string(c.activation == model::Activation::Relu ? "relu" : "identity");
            }},
      TRIMIX_UINT("batch", batch),
      TRIMIX_UINT("epochs", epochs),
      TRIMIX_DOUBLE("lr", lr),
      TRIMIX_DOUBLE("weight_decay", weight_decay),
      TRIMIX_UINT("seed", seed),
      TRIMIX_UINT("save_every", save_every),
      TRIMIX_STRING("checkpoint_precision", checkpoint_precision),
      Field{"dataset",
            [](TriMixConfig& c, const std::string& v) {
              if (v == "synthetic") c.dataset = DatasetKind::Synthetic;
              else if (v == "idx") c.dataset = DatasetKind::Idx;
              else if (v == "csv") c.dataset = DatasetKind::Csv;
              else throw ConfigError("key 'dataset': expected synthetic, idx or csv, got '" + v + "'");
            },
            [](const TriMixConfig& c) {
              switch (c.dataset) {
                case DatasetKind::Idx: return std::string("idx");
                case DatasetKind::Csv: return std::string("csv");
                default: return std::string("synthetic");
              }
            }},
      TRIMIX_UINT("synthetic.classes", synthetic_classes),
      TRIMIX_UINT("synthetic.train", synthetic_train),
      TRIMIX_UINT("synthetic.test", synthetic_test),
      TRIMIX_UINT("synthetic.grid", synthetic_grid),
      TRIMIX_UINT("synthetic.seed", synthetic_seed),
      TRIMIX_DOUBLE("synthetic.sigma", synthetic_sigma),
      TRIMIX_DOUBLE("synthetic.jitter", synthetic_jitter),
      TRIMIX_DOUBLE("synthetic.noise", synthetic_noise),
      TRIMIX_DOUBLE("synthetic.background", synthetic_background),
      TRIMIX_STRING("idx.train_images", train_images),
      TRIMIX_STRING("idx.train_labels", train_labels),
      TRIMIX_STRING("idx.test_images", test_images),
      TRIMIX_STRING("idx.test_labels", test_labels),
      TRIMIX_STRING("csv.train", train_csv),
      TRIMIX_STRING("csv.test", test_csv),
      TRIMIX_UINT("csv.channels", csv_channels),
      TRIMIX_UINT("csv.height", csv_height),
      TRIMIX_UINT("csv.width", csv_width),
      TRIMIX_UINT("aug.pad", aug_pad),
      TRIMIX_DOUBLE("aug.hflip", aug_hflip),
      TRIMIX_DOUBLE("aug.brightness", aug_brightness),
      TRIMIX_DOUBLE("aug.contrast", aug_contrast),
      TRIMIX_DOUBLE("aug.grayscale", aug_grayscale),
      TRIMIX_UINT("knn.k", knn_k),
      TRIMIX_UINT("probe.epochs", probe_epochs),
      TRIMIX_DOUBLE("probe.lr", probe_lr),
      TRIMIX_DOUBLE("probe.momentum", probe_momentum),
      TRIMIX_DOUBLE("probe.weight_decay", probe_weight_decay),
      TRIMIX_UINT("probe.batch", probe_batch),
      TRIMIX_DOUBLE("finetune.fraction", finetune_fraction),
      TRIMIX_UINT("finetune.epochs", finetune_epochs),
      TRIMIX_UINT("eval.seed", eval_seed),
  };
  return table;
}

#undef TRIMIX_DOUBLE
#undef TRIMIX_UINT
#undef TRIMIX_BOOL
#undef TRIMIX_STRING

const Field& find_field(const std::string& key) {
  for (const auto& f : fields())
    if (f.key == key) return f;
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

std::string LambdaPolicy::str() const { return kind == Kind::Uniform ? "uniform" : "fixed(" + fmt_double(value) + ")"; }

LambdaPolicy LambdaPolicy::parse(const std::string& s) {
  if (s == "uniform") return uniform();
  if (s.rfind("fixed(", 0) == 0 && s.back() == ')') {
    const double v = parse_double("lambda_policy", s.substr(6, s.size() - 7));
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("lambda_policy: fixed value must lie in [0, 1]");
    return fixed(v);
  }
  throw ConfigError("lambda_policy: expected 'uniform' or 'fixed(v)', got '" + s + "'");
}

std::string placement_str(Placement p) {
  switch (p) {
    case Placement::YY: return "YY";
    case Placement::ZY: return "ZY";
    default: return "ZZ";
  }
}

Placement parse_placement(const std::string& s) {
  if (s == "ZZ") return Placement::ZZ;
  if (s == "YY") return Placement::YY;
  if (s == "ZY") return Placement::ZY;
  throw ConfigError("placement: expected ZZ, YY or ZY, got '" + s + "'");
}

void TriMixConfig::set(const std::string& key, const std::string& value) { find_field(key).set(*this, trim(value)); }

std::string TriMixConfig::get(const std::string& key) const { return find_field(key).get(*this); }

const std::vector<std::string>& TriMixConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.push_back(f.key);
    return out;
  }();
  return names;
}

void TriMixConfig::validate() const {
  if (batch < 2 || batch % 2 != 0) {
    throw BatchParityError("batch size must be even and >= 2 (flip pairing needs no self-mixed row), got " +
                           std::to_string(batch));
  }
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
  if (beta < 0.0 || gamma < 0.0 || alpha < 0.0) throw ConfigError("alpha, beta and gamma must be non-negative");
  if (lambda_policy.kind == LambdaPolicy::Kind::Fixed && !(lambda_policy.value >= 0.0 && lambda_policy.value <= 1.0)) {
    throw ConfigError("lambda_policy: fixed value must lie in [0, 1]");
  }
  if (checkpoint_precision != "f32" && checkpoint_precision != "f64") {
    throw ConfigError("checkpoint_precision must be f32 or f64");
  }
  for (double p : {aug_hflip, aug_grayscale})
    if (p < 0.0 || p > 1.0) throw ConfigError("augmentation probabilities must lie in [0, 1]");
  if (aug_brightness < 0.0 || aug_brightness >= 1.0 || aug_contrast < 0.0 || aug_contrast >= 1.0) {
    throw ConfigError("jitter strengths must lie in [0, 1)");
  }
  if (knn_k == 0) throw ConfigError("knn.k must be >= 1");
  if (!(finetune_fraction > 0.0 && finetune_fraction <= 1.0)) throw ConfigError("finetune.fraction must lie in (0, 1]");
}

std::string TriMixConfig::to_text() const {
  std::string out;
  for (const auto& f : fields()) out += f.key + "=" + f.get(*this) + "\n";
  return out;
}

TriMixConfig TriMixConfig::from_text(const std::string& text) {
  TriMixConfig cfg;
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return cfg;
}

TriMixConfig TriMixConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str());
}

model::Arch TriMixConfig::arch(std::size_t input_width) const {
  model::Arch a;
  a.input = input_width;
  a.encoder = encoder_widths;
  a.projector = projector_widths;
  a.activation = activation;
  return a;
}

std::string config_digest(const TriMixConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : cfg.to_text()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace trimix
