#include <fstream>
#include <set>
#include <sstream>

#include "perfed/errors.hpp"
#include "perfed/experiment.hpp"

namespace perfed {

using nlohmann::json;

std::string to_string(Method m) {
  switch (m) {
    case Method::perfed: return "perfed";
    case Method::local: return "local";
    case Method::fedavg: return "fedavg";
    case Method::fedprox: return "fedprox";
  }
  return "?";
}

std::optional<Method> parse_method(const std::string& s) {
  if (s == "perfed") return Method::perfed;
  if (s == "local") return Method::local;
  if (s == "fedavg") return Method::fedavg;
  if (s == "fedprox") return Method::fedprox;
  return std::nullopt;
}

namespace {

// Walks one JSON object, recording type errors and unknown keys under a
// dotted field path.
class Reader {
 public:
  Reader(const json& j, std::string path, std::vector<std::string>& errors)
      : j_(j), path_(std::move(path)), errors_(errors) {
    if (!j_.is_object()) {
      errors_.push_back(label() + ": expected an object");
      ok_ = false;
    }
  }

  ~Reader() {
    if (!ok_) return;
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) errors_.push_back(field(key) + ": unknown key");
    }
  }

  Reader(const Reader&) = delete;
  Reader& operator=(const Reader&) = delete;

  bool has(const std::string& key) {
    if (!ok_ || !j_.contains(key)) return false;
    seen_.insert(key);
    return true;
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!type_ok<T>(v)) {
      errors_.push_back(field(key) + ": expected " + type_name<T>());
      return;
    }
    out = v.get<T>();
  }

  Reader child(const std::string& key) {
    seen_.insert(key);
    return Reader(j_.at(key), field(key), errors_);
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string label() const { return path_.empty() ? "<root>" : path_; }

  template <typename T>
  static bool type_ok(const json& v) {
    if constexpr (std::is_same_v<T, bool>) {
      return v.is_boolean();
    } else if constexpr (std::is_integral_v<T>) {
      return v.is_number_integer() && (std::is_signed_v<T> || v.is_number_unsigned() || v.get<long long>() >= 0);
    } else if constexpr (std::is_floating_point_v<T>) {
      return v.is_number();
    } else if constexpr (std::is_same_v<T, std::string>) {
      return v.is_string();
    } else if constexpr (std::is_same_v<T, std::vector<int>>) {
      if (!v.is_array()) return false;
      for (const auto& e : v) {
        if (!e.is_number_integer()) return false;
      }
      return true;
    } else {
      if (!v.is_array()) return false;
      for (const auto& row : v) {
        if (!row.is_array()) return false;
        for (const auto& e : row) {
          if (!e.is_number()) return false;
        }
      }
      return true;
    }
  }

  template <typename T>
  static std::string type_name() {
    if constexpr (std::is_same_v<T, bool>) return "a boolean";
    else if constexpr (std::is_integral_v<T>) return std::is_signed_v<T> ? "an integer" : "a nonnegative integer";
    else if constexpr (std::is_floating_point_v<T>) return "a number";
    else if constexpr (std::is_same_v<T, std::string>) return "a string";
    else if constexpr (std::is_same_v<T, std::vector<int>>) return "an array of integers";
    else return "an array of number arrays";
  }

  const json& j_;
  std::string path_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
  bool ok_ = true;
};

void read_train_opts(Reader& r, nn::TrainOpts& opts) {
  r.get("learning_rate", opts.learning_rate);
  r.get("epochs", opts.epochs);
  r.get("batch_size", opts.batch_size);
}

void check_train_opts(const nn::TrainOpts& o, const std::string& path, std::vector<std::string>& errors) {
  if (!(o.learning_rate > 0.0)) errors.push_back(path + ".learning_rate: must be positive");
  if (o.epochs < 1) errors.push_back(path + ".epochs: must be >= 1");
  if (o.batch_size < 1) errors.push_back(path + ".batch_size: must be >= 1");
}

json train_opts_json(const nn::TrainOpts& o) {
  return {{"learning_rate", o.learning_rate}, {"epochs", o.epochs}, {"batch_size", o.batch_size}};
}

}  // namespace

std::vector<std::string> ExperimentConfig::validation_errors() const {
  std::vector<std::string> e;
  const auto& t = task;
  if (t.class_count < 2) e.push_back("task.class_count: must be >= 2");
  if (t.dim < 1) e.push_back("task.dim: must be >= 1");
  if (!t.means.empty()) {
    if (t.means.size() != static_cast<std::size_t>(t.class_count)) e.push_back("task.means: need one mean per class");
    for (std::size_t c = 0; c < t.means.size(); ++c) {
      if (t.means[c].size() != static_cast<std::size_t>(t.dim)) {
        e.push_back("task.means[" + std::to_string(c) + "]: length must equal task.dim");
      }
      for (std::size_t d = 0; d < c; ++d) {
        if (t.means[c] == t.means[d]) e.push_back("task.means[" + std::to_string(c) + "]: duplicates another mean");
      }
    }
  } else if (!(t.radius > 0.0)) {
    e.push_back("task.radius: must be positive");
  }
  if (!(t.scale > 0.0)) e.push_back("task.scale: must be positive");
  if (t.class_count >= 2) {
    const auto k = static_cast<std::size_t>(t.class_count);
    if (t.train_size < k) e.push_back("task.train_size: must be >= task.class_count");
    if (t.test_size < k) e.push_back("task.test_size: must be >= task.class_count");
  }

  const auto& p = partition;
  if (p.client_count < 1) e.push_back("partition.client_count: must be >= 1");
  if (p.per_client_size < 1) e.push_back("partition.per_client_size: must be >= 1");
  if (p.client_count >= 1 && static_cast<std::size_t>(p.client_count) * p.per_client_size > t.train_size) {
    e.push_back("partition.per_client_size: client_count x per_client_size exceeds task.train_size");
  }
  if (p.mode == datagen::PartitionMode::noniid) {
    if (!(p.major_class_fraction > 0.0 && p.major_class_fraction <= 1.0)) {
      e.push_back("partition.major_class_fraction: must lie in (0, 1]");
    }
    if (!(p.major_sample_fraction > 0.0 && p.major_sample_fraction <= 1.0)) {
      e.push_back("partition.major_sample_fraction: must lie in (0, 1]");
    }
  }

  if (arch.shared_hidden_widths.empty()) {
    if (arch.depth_choices.empty()) e.push_back("arch.depth_choices: must not be empty");
    for (int d : arch.depth_choices) {
      if (d < 1 || d > 3) e.push_back("arch.depth_choices: entries must lie in {1,2,3}");
    }
    if (arch.width_menu.empty()) e.push_back("arch.width_menu: must not be empty");
    for (int w : arch.width_menu) {
      if (w < 1) e.push_back("arch.width_menu: widths must be positive");
    }
  } else {
    if (arch.shared_hidden_widths.size() > 3) e.push_back("arch.shared_hidden_widths: at most 3 layers");
    for (int w : arch.shared_hidden_widths) {
      if (w < 1) e.push_back("arch.shared_hidden_widths: widths must be positive");
    }
  }

  if (!(fed.beta > 0.0)) e.push_back("fed.beta: must be positive");
  if (fed.max_round < 1) e.push_back("fed.max_round: must be >= 1");
  const auto& g = fed.gan;
  if (g.steps < 0) e.push_back("fed.gan.steps: must be >= 0");
  if (!(g.gen_lr > 0.0)) e.push_back("fed.gan.gen_lr: must be positive");
  if (!(g.disc_lr > 0.0)) e.push_back("fed.gan.disc_lr: must be positive");
  if (g.batch_size < 1) e.push_back("fed.gan.batch_size: must be >= 1");
  if (!(g.class_loss_weight >= 0.0)) e.push_back("fed.gan.class_loss_weight: must be >= 0");
  if (!(g.ema_decay >= 0.0 && g.ema_decay < 1.0)) e.push_back("fed.gan.ema_decay: must lie in [0, 1)");
  if (g.dp) {
    if (!(g.dp->clip_norm > 0.0)) e.push_back("fed.gan.dp.clip_norm: must be positive");
    if (!(g.dp->noise_multiplier >= 0.0)) e.push_back("fed.gan.dp.noise_multiplier: must be >= 0");
  }
  check_train_opts(fed.init_train, "fed.init_train", e);
  check_train_opts(fed.update_train, "fed.update_train", e);

  if (latent_dim < 1) e.push_back("latent_dim: must be >= 1");
  if (baseline.rounds < 1) e.push_back("baseline.rounds: must be >= 1");
  if (baseline.local_epochs < 1) e.push_back("baseline.local_epochs: must be >= 1");
  if (!(baseline.prox_mu >= 0.0)) e.push_back("baseline.prox_mu: must be >= 0");
  if (jobs < 1) e.push_back("jobs: must be >= 1");
  if (out_dir.empty()) e.push_back("out_dir: must not be empty");
  return e;
}

namespace {

[[noreturn]] void fail(const std::vector<std::string>& errors) {
  std::ostringstream os;
  os << errors.size() << " configuration error(s): ";
  for (std::size_t i = 0; i < errors.size(); ++i) os << (i ? "; " : "") << errors[i];
  throw ConfigError(os.str());
}

}  // namespace

void ExperimentConfig::validate() const {
  const auto errors = validation_errors();
  if (!errors.empty()) fail(errors);
}

std::uint64_t ExperimentConfig::seed() const {
  if (!master_seed) throw ConfigError("master_seed: no seed given (set master_seed or pass --seed)");
  return *master_seed;
}

ExperimentConfig parse_config(const json& j) {
  ExperimentConfig c;
  std::vector<std::string> errors;
  {
    Reader root(j, "", errors);
    if (root.has("master_seed")) {
      std::uint64_t s = 0;
      root.get("master_seed", s);
      c.master_seed = s;
    }
    root.get("out_dir", c.out_dir);
    root.get("jobs", c.jobs);
    root.get("latent_dim", c.latent_dim);
    if (root.has("method")) {
      std::string m;
      root.get("method", m);
      if (auto parsed = parse_method(m)) c.method = *parsed;
      else if (!m.empty()) errors.push_back("method: must be one of perfed, local, fedavg, fedprox");
    }
    if (root.has("task")) {
      Reader r = root.child("task");
      r.get("class_count", c.task.class_count);
      r.get("dim", c.task.dim);
      r.get("means", c.task.means);
      r.get("radius", c.task.radius);
      r.get("scale", c.task.scale);
      r.get("train_size", c.task.train_size);
      r.get("test_size", c.task.test_size);
    }
    if (root.has("partition")) {
      Reader r = root.child("partition");
      if (r.has("mode")) {
        std::string mode;
        r.get("mode", mode);
        if (mode == "iid") c.partition.mode = datagen::PartitionMode::iid;
        else if (mode == "noniid") c.partition.mode = datagen::PartitionMode::noniid;
        else errors.push_back("partition.mode: must be \"iid\" or \"noniid\"");
      }
      r.get("client_count", c.partition.client_count);
      r.get("per_client_size", c.partition.per_client_size);
      r.get("major_class_fraction", c.partition.major_class_fraction);
      r.get("major_sample_fraction", c.partition.major_sample_fraction);
    }
    if (root.has("arch")) {
      Reader r = root.child("arch");
      r.get("depth_choices", c.arch.depth_choices);
      r.get("width_menu", c.arch.width_menu);
      r.get("shared_hidden_widths", c.arch.shared_hidden_widths);
    }
    if (root.has("fed")) {
      Reader r = root.child("fed");
      r.get("beta", c.fed.beta);
      r.get("max_round", c.fed.max_round);
      if (r.has("gan")) {
        Reader g = r.child("gan");
        g.get("steps", c.fed.gan.steps);
        g.get("gen_lr", c.fed.gan.gen_lr);
        g.get("disc_lr", c.fed.gan.disc_lr);
        g.get("batch_size", c.fed.gan.batch_size);
        g.get("class_loss_weight", c.fed.gan.class_loss_weight);
        g.get("ema_decay", c.fed.gan.ema_decay);
        if (g.has("dp")) {
          Reader d = g.child("dp");
          gan::DpOpts dp;
          d.get("clip_norm", dp.clip_norm);
          d.get("noise_multiplier", dp.noise_multiplier);
          c.fed.gan.dp = dp;
        }
      }
      if (r.has("init_train")) {
        Reader t = r.child("init_train");
        read_train_opts(t, c.fed.init_train);
      }
      if (r.has("update_train")) {
        Reader t = r.child("update_train");
        read_train_opts(t, c.fed.update_train);
      }
    }
    if (root.has("baseline")) {
      Reader r = root.child("baseline");
      r.get("rounds", c.baseline.rounds);
      r.get("local_epochs", c.baseline.local_epochs);
      r.get("prox_mu", c.baseline.prox_mu);
    }
  }
  const auto invariant_errors = c.validation_errors();
  errors.insert(errors.end(), invariant_errors.begin(), invariant_errors.end());
  if (!errors.empty()) fail(errors);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  }
  return parse_config(j);
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  if (c.master_seed) j["master_seed"] = *c.master_seed;
  j["out_dir"] = c.out_dir;
  j["jobs"] = c.jobs;
  j["latent_dim"] = c.latent_dim;
  j["method"] = to_string(c.method);
  j["task"] = {{"class_count", c.task.class_count}, {"dim", c.task.dim},        {"radius", c.task.radius},
               {"scale", c.task.scale},             {"train_size", c.task.train_size}, {"test_size", c.task.test_size}};
  if (!c.task.means.empty()) j["task"]["means"] = c.task.means;
  j["partition"] = {{"mode", c.partition.mode == datagen::PartitionMode::iid ? "iid" : "noniid"},
                    {"client_count", c.partition.client_count},
                    {"per_client_size", c.partition.per_client_size},
                    {"major_class_fraction", c.partition.major_class_fraction},
                    {"major_sample_fraction", c.partition.major_sample_fraction}};
  j["arch"] = {{"depth_choices", c.arch.depth_choices}, {"width_menu", c.arch.width_menu}};
  if (!c.arch.shared_hidden_widths.empty()) j["arch"]["shared_hidden_widths"] = c.arch.shared_hidden_widths;
  const auto& g = c.fed.gan;
  j["fed"] = {{"beta", c.fed.beta},
              {"max_round", c.fed.max_round},
              {"gan",
               {{"steps", g.steps},
                {"gen_lr", g.gen_lr},
                {"disc_lr", g.disc_lr},
                {"batch_size", g.batch_size},
                {"class_loss_weight", g.class_loss_weight},
                {"ema_decay", g.ema_decay}}},
              {"init_train", train_opts_json(c.fed.init_train)},
              {"update_train", train_opts_json(c.fed.update_train)}};
  if (g.dp) j["fed"]["gan"]["dp"] = {{"clip_norm", g.dp->clip_norm}, {"noise_multiplier", g.dp->noise_multiplier}};
  j["baseline"] = {{"rounds", c.baseline.rounds},
                   {"local_epochs", c.baseline.local_epochs},
                   {"prox_mu", c.baseline.prox_mu}};
  return j;
}

}  // namespace perfed
