#include "qarerank/run_config.h"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "qarerank/error.h"

namespace qarerank {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

// Drops a trailing comment that is not inside a quoted string.
std::string_view strip_comment(std::string_view s) {
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') quoted = !quoted;
    if (s[i] == '#' && !quoted) return s.substr(0, i);
  }
  return s;
}

class Value {
 public:
  Value(std::string raw, std::string where) : raw_(std::move(raw)), where_(std::move(where)) {}

  std::string as_string() const {
    if (raw_.size() < 2 || raw_.front() != '"' || raw_.back() != '"') fail("expected a quoted string");
    return raw_.substr(1, raw_.size() - 2);
  }

  bool as_bool() const {
    if (raw_ == "true") return true;
    if (raw_ == "false") return false;
    fail("expected true or false");
  }

  double as_double() const {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(raw_.data(), raw_.data() + raw_.size(), v);
    if (ec != std::errc() || ptr != raw_.data() + raw_.size()) fail("expected a number");
    return v;
  }

  template <typename Int>
  Int as_int() const {
    Int v = 0;
    const auto [ptr, ec] = std::from_chars(raw_.data(), raw_.data() + raw_.size(), v);
    if (ec != std::errc() || ptr != raw_.data() + raw_.size()) fail("expected an integer");
    return v;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const { throw ParseError(where_ + ": " + what); }

  std::string raw_;
  std::string where_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir) {
  RunConfig cfg;
  std::string section;
  std::vector<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string raw_line;
  int line_no = 0;
  bool have_clean = false;

  while (std::getline(in, raw_line)) {
    ++line_no;
    const std::string where = "config line " + std::to_string(line_no);
    const std::string_view line = trim(strip_comment(raw_line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError(where + ": unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      static const std::vector<std::string> known = {"data", "shifts", "train", "features", "gbdt"};
      if (std::find(known.begin(), known.end(), section) == known.end()) {
        throw ParseError(where + ": unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(where + ": expected key = value");
    const std::string key(trim(line.substr(0, eq)));
    const Value v(std::string(trim(line.substr(eq + 1))), where + " (" + key + ")");
    if (section.empty()) throw ParseError(where + ": key outside of any section");
    const std::string full = section + "." + key;
    if (std::find(seen.begin(), seen.end(), full) != seen.end()) throw ParseError(where + ": duplicate key " + full);
    seen.push_back(full);

    auto unknown = [&] { throw ParseError(where + ": unknown key '" + key + "' in [" + section + "]"); };
    if (section == "data") {
      if (key == "clean") {
        cfg.clean_path = resolve(base_dir, v.as_string());
        have_clean = true;
      } else {
        unknown();
      }
    } else if (section == "shifts") {
      cfg.shift_paths.emplace_back(key, resolve(base_dir, v.as_string()));
    } else if (section == "train") {
      if (key == "mode") cfg.mode = parse_train_mode(v.as_string());
      else if (key == "shift") cfg.shift_name = v.as_string();
      else if (key == "single_count") cfg.single_count = v.as_int<std::size_t>();
      else if (key == "count_each") cfg.count_each = v.as_int<std::size_t>();
      else if (key == "clean_fraction") cfg.clean_fraction = v.as_double();
      else if (key == "seed") cfg.seed = v.as_int<std::uint64_t>();
      else unknown();
    } else if (section == "features") {
      FeatureConfig& f = cfg.features;
      if (key == "use_lengths") f.use_lengths = v.as_bool();
      else if (key == "use_prob") f.use_prob = v.as_bool();
      else if (key == "use_logits") f.use_logits = v.as_bool();
      else if (key == "use_entropy") f.use_entropy = v.as_bool();
      else if (key == "use_scaled_softmax") f.use_scaled_softmax = v.as_bool();
      else if (key == "lambda") f.lambda = v.as_double();
      else if (key == "use_embedding") f.use_embedding = v.as_bool();
      else if (key == "use_hidden_last") f.use_hidden_last = v.as_bool();
      else if (key == "use_hidden_avg") f.use_hidden_avg = v.as_bool();
      else unknown();
    } else if (section == "gbdt") {
      TrainParams& p = cfg.params;
      if (key == "num_rounds") p.num_rounds = v.as_int<int>();
      else if (key == "learning_rate") p.learning_rate = v.as_double();
      else if (key == "max_depth") p.max_depth = v.as_int<int>();
      else if (key == "min_child_weight") p.min_child_weight = v.as_double();
      else if (key == "reg_lambda") p.reg_lambda = v.as_double();
      else if (key == "gamma") p.gamma = v.as_double();
      else if (key == "subsample") p.subsample = v.as_double();
      else if (key == "colsample") p.colsample = v.as_double();
      else if (key == "seed") p.seed = v.as_int<std::uint64_t>();
      else if (key == "threads") cfg.threads = v.as_int<int>();
      else unknown();
    }
  }

  if (!have_clean) throw ParseError("config: [data] clean is required");
  if (cfg.mode == TrainMode::kSingleMixed && cfg.shift_name.empty()) {
    throw ParseError("config: single_mixed mode needs [train] shift");
  }
  if (!cfg.shift_name.empty() &&
      std::none_of(cfg.shift_paths.begin(), cfg.shift_paths.end(),
                   [&](const auto& s) { return s.first == cfg.shift_name; })) {
    throw ParseError("config: [train] shift '" + cfg.shift_name + "' is not listed in [shifts]");
  }
  if (!(cfg.clean_fraction > 0.0 && cfg.clean_fraction < 1.0)) {
    throw InvalidArgument("config: clean_fraction must be in (0,1)");
  }
  validate(cfg.features);
  // num_classes comes from the data; any placeholder >= 2 passes here.
  TrainParams check = cfg.params;
  check.num_classes = std::max(check.num_classes, 2);
  validate(check);
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  RunConfig cfg = parse_run_config(buf.str(), path.parent_path());
  auto require = [](const std::filesystem::path& p) {
    if (!std::filesystem::exists(p)) throw IoError("config references missing file " + p.string());
  };
  require(cfg.clean_path);
  for (const auto& [name, p] : cfg.shift_paths) require(p);
  return cfg;
}

TrainSpec make_train_spec(const RunConfig& config) {
  TrainSpec spec;
  spec.clean_corpus = load_corpus(config.clean_path);
  for (const auto& [name, p] : config.shift_paths) spec.shift_corpora.emplace_back(name, load_corpus(p));
  spec.mode = config.mode;
  spec.shift_name = config.shift_name;
  spec.single_count = config.single_count;
  spec.count_each = config.count_each;
  spec.clean_train_fraction = config.clean_fraction;
  spec.feature_config = config.features;
  spec.params = config.params;
  spec.params.num_classes = spec.clean_corpus.meta.k;
  spec.seed = config.seed;
  return spec;
}

}  // namespace qarerank
