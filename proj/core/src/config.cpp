#include "selfqa/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>

#include <json.hpp>

extern char** environ;

namespace selfqa {

using nlohmann::json;

const char* kEnvPrefix() { return "SELFQA_"; }

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& why) {
  throw ConfigError("config field '" + field + "': " + why);
}

template <class T>
void read_field(const json& obj, const std::string& section,
                const std::string& key, T& out) {
  if (!obj.contains(key)) return;
  std::string path = section.empty() ? key : section + "." + key;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(path, e.what());
  }
}

void reject_unknown(const json& obj, const std::string& section,
                    std::initializer_list<const char*> known) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : known)
      if (it.key() == k) ok = true;
    if (!ok)
      fail(section.empty() ? it.key() : section + "." + it.key(),
           "unknown field");
  }
}

json default_json();

RunConfig from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  RunConfig cfg;
  reject_unknown(j, "", {"schema_version", "world", "model", "train", "n_train",
                         "n_val", "seeds", "sigma_grid", "rho_grid"});
  read_field(j, "", "schema_version", cfg.schema_version);
  if (cfg.schema_version != 1)
    fail("schema_version", "unsupported version (expected 1)");

  if (j.contains("world")) {
    const json& w = j.at("world");
    reject_unknown(w, "world",
                   {"shapes", "colors", "motions", "events", "feat_dim",
                    "feat_noise", "seed"});
    read_field(w, "world", "shapes", cfg.world.shapes);
    read_field(w, "world", "colors", cfg.world.colors);
    read_field(w, "world", "motions", cfg.world.motions);
    read_field(w, "world", "events", cfg.world.events);
    read_field(w, "world", "feat_dim", cfg.world.feat_dim);
    read_field(w, "world", "feat_noise", cfg.world.feat_noise);
    read_field(w, "world", "seed", cfg.world.seed);
  }
  if (j.contains("model")) {
    const json& m = j.at("model");
    reject_unknown(m, "model",
                   {"layers", "dim", "heads", "max_len", "video_slots",
                    "feat_dim", "mlp_hidden", "adapter_rank", "freeze_base"});
    read_field(m, "model", "layers", cfg.model.layers);
    read_field(m, "model", "dim", cfg.model.dim);
    read_field(m, "model", "heads", cfg.model.heads);
    read_field(m, "model", "max_len", cfg.model.max_len);
    read_field(m, "model", "video_slots", cfg.model.video_slots);
    read_field(m, "model", "feat_dim", cfg.model.feat_dim);
    read_field(m, "model", "mlp_hidden", cfg.model.mlp_hidden);
    read_field(m, "model", "adapter_rank", cfg.model.adapter_rank);
    read_field(m, "model", "freeze_base", cfg.model.freeze_base);
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    reject_unknown(t, "train",
                   {"enable_selfq", "enable_feedback", "enable_edl_filter",
                    "enable_reg", "gumbel_tau", "gumbel_hard", "gumbel_noise",
                    "epochs", "batch_size", "lr", "optimizer", "seed",
                    "edl_annealing", "uncertainty_from_selfq",
                    "uncertainty_strength", "evidence_mode", "edl_bias_init"});
    read_field(t, "train", "enable_selfq", cfg.train.enable_selfq);
    read_field(t, "train", "enable_feedback", cfg.train.enable_feedback);
    read_field(t, "train", "enable_edl_filter", cfg.train.enable_edl_filter);
    read_field(t, "train", "enable_reg", cfg.train.enable_reg);
    read_field(t, "train", "gumbel_tau", cfg.train.gumbel_tau);
    read_field(t, "train", "gumbel_hard", cfg.train.gumbel_hard);
    read_field(t, "train", "gumbel_noise", cfg.train.gumbel_noise);
    read_field(t, "train", "epochs", cfg.train.epochs);
    read_field(t, "train", "batch_size", cfg.train.batch_size);
    read_field(t, "train", "lr", cfg.train.lr);
    read_field(t, "train", "optimizer", cfg.train.optimizer);
    read_field(t, "train", "seed", cfg.train.seed);
    read_field(t, "train", "edl_annealing", cfg.train.edl_annealing);
    read_field(t, "train", "uncertainty_from_selfq",
               cfg.train.uncertainty_from_selfq);
    read_field(t, "train", "uncertainty_strength",
               cfg.train.uncertainty_strength);
    read_field(t, "train", "evidence_mode", cfg.train.evidence_mode);
    read_field(t, "train", "edl_bias_init", cfg.train.edl_bias_init);
  }
  read_field(j, "", "n_train", cfg.n_train);
  read_field(j, "", "n_val", cfg.n_val);
  read_field(j, "", "seeds", cfg.seeds);
  read_field(j, "", "sigma_grid", cfg.sigma_grid);
  read_field(j, "", "rho_grid", cfg.rho_grid);
  return cfg;
}

json to_json(const RunConfig& c) {
  return json{
      {"schema_version", c.schema_version},
      {"world",
       {{"shapes", c.world.shapes},
        {"colors", c.world.colors},
        {"motions", c.world.motions},
        {"events", c.world.events},
        {"feat_dim", c.world.feat_dim},
        {"feat_noise", c.world.feat_noise},
        {"seed", c.world.seed}}},
      {"model",
       {{"layers", c.model.layers},
        {"dim", c.model.dim},
        {"heads", c.model.heads},
        {"max_len", c.model.max_len},
        {"video_slots", c.model.video_slots},
        {"feat_dim", c.model.feat_dim},
        {"mlp_hidden", c.model.mlp_hidden},
        {"adapter_rank", c.model.adapter_rank},
        {"freeze_base", c.model.freeze_base}}},
      {"train",
       {{"enable_selfq", c.train.enable_selfq},
        {"enable_feedback", c.train.enable_feedback},
        {"enable_edl_filter", c.train.enable_edl_filter},
        {"enable_reg", c.train.enable_reg},
        {"gumbel_tau", c.train.gumbel_tau},
        {"gumbel_hard", c.train.gumbel_hard},
        {"gumbel_noise", c.train.gumbel_noise},
        {"epochs", c.train.epochs},
        {"batch_size", c.train.batch_size},
        {"lr", c.train.lr},
        {"optimizer", c.train.optimizer},
        {"seed", c.train.seed},
        {"edl_annealing", c.train.edl_annealing},
        {"uncertainty_from_selfq", c.train.uncertainty_from_selfq},
        {"uncertainty_strength", c.train.uncertainty_strength},
        {"evidence_mode", c.train.evidence_mode},
        {"edl_bias_init", c.train.edl_bias_init}}},
      {"n_train", c.n_train},
      {"n_val", c.n_val},
      {"seeds", c.seeds},
      {"sigma_grid", c.sigma_grid},
      {"rho_grid", c.rho_grid}};
}

/// SELFQA_TRAIN_GUMBEL_TAU -> /train/gumbel_tau; SELFQA_N_TRAIN -> /n_train.
void apply_env(json& j) {
  const std::string prefix = kEnvPrefix();
  for (char** e = environ; *e; ++e) {
    std::string entry = *e;
    if (entry.rfind(prefix, 0) != 0) continue;
    std::size_t eq = entry.find('=');
    if (eq == std::string::npos) continue;
    std::string name = entry.substr(prefix.size(), eq - prefix.size());
    std::string value = entry.substr(eq + 1);
    for (char& c : name) c = char(std::tolower((unsigned char)c));

    std::string section, field = name;
    std::size_t us = name.find('_');
    if (us != std::string::npos) {
      std::string head = name.substr(0, us);
      if (head == "world" || head == "model" || head == "train") {
        section = head;
        field = name.substr(us + 1);
      }
    }
    json parsed;
    try {
      parsed = json::parse(value);
    } catch (const json::exception&) {
      parsed = value;  // bare strings need no quoting
    }
    if (section.empty())
      j[field] = parsed;
    else
      j[section][field] = parsed;
  }
}

}  // namespace

void RunConfig::validate() const {
  try {
    world.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config field 'world': ") + e.what());
  }
  try {
    train.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config field 'train': ") + e.what());
  }
  if (model.layers < 1) fail("model.layers", "must be >= 1");
  if (model.dim < 2) fail("model.dim", "must be >= 2");
  if (model.heads < 1 || model.dim % model.heads != 0)
    fail("model.heads", "must divide model.dim");
  if (model.feat_dim != world.feat_dim)
    fail("model.feat_dim", "must equal world.feat_dim");
  if (model.video_slots != world.events)
    fail("model.video_slots", "must equal world.events");
  if (n_train < 1) fail("n_train", "must be >= 1");
  if (n_val < 1) fail("n_val", "must be >= 1");
  if (seeds.empty()) fail("seeds", "must list at least one seed");
  if (sigma_grid.empty()) fail("sigma_grid", "must not be empty");
  for (double s : sigma_grid)
    if (s < 0) fail("sigma_grid", "levels must be >= 0");
  for (double r : rho_grid)
    if (r < 0 || r > 1) fail("rho_grid", "levels must lie in [0,1]");
}

RunConfig config_from_json_text(const std::string& text, bool env) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  if (env) apply_env(j);
  RunConfig cfg = from_json(j);
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return config_from_json_text(text);
}

std::string config_to_json_text(const RunConfig& cfg) {
  return to_json(cfg).dump(2) + "\n";
}

}  // namespace selfqa
