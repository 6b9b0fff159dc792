#include "dcn/config.hpp"

#include <cmath>
#include <fstream>

#include "dcn/tensor.hpp"

namespace dcn {

using nlohmann::json;

std::string_view to_string(DirectionMode m) {
  switch (m) {
    case DirectionMode::Both: return "both";
    case DirectionMode::ImageGuided: return "image_guided";
    case DirectionMode::QuestionGuided: return "question_guided";
  }
  return "?";
}

std::string_view to_string(SummaryMode m) {
  return m == SummaryMode::Attention ? "attention" : "average";
}

std::string_view to_string(ExtractionMode m) {
  return m == ExtractionMode::LayerAttention ? "layer_attention" : "last_layer";
}

std::size_t DcnConfig::grid_side() const {
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(T))));
  return side;
}

std::size_t DcnConfig::vocab_size() const {
  return kFirstObjectToken + data.n_objects + data.n_attributes;
}

void DcnConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("invalid config field '" + field + "': " + why);
  };
  if (d == 0 || d % 2 != 0) fail("d", "must be positive and even");
  if (h == 0 || d % h != 0) fail("h", "d must be divisible by h");
  if (L == 0) fail("L", "stack depth must be at least 1");
  if (T == 0 || grid_side() * grid_side() != T) fail("T", "must be a perfect square");
  if (N_max == 0) fail("N_max", "must be positive");
  if (e == 0) fail("e", "must be positive");
  if (c == 0) fail("c", "must be positive");
  if (layer_attn_hidden == 0) fail("layer_attn_hidden", "must be positive");
  if (head_hidden == 0) fail("head_hidden", "must be positive");
  if (head != HeadVariant::Inner && head != HeadVariant::SumMlp && head != HeadVariant::CatMlp) {
    fail("head", "must be 16, 17 or 18");
  }
  if (data.n_objects < 4) fail("n_objects", "need at least 4 objects");
  if (data.n_attributes < 4) fail("n_attributes", "need at least 4 attributes");
  if (data.n_objects > T) fail("n_objects", "cannot exceed the number of regions T");
  if (data.min_objects < 1 || data.min_objects > data.n_objects) {
    fail("min_objects", "must lie in [1, n_objects]");
  }
  if (data.noise < 0.0) fail("noise", "must be non-negative");
  auto rate = [&](const char* name, double v) {
    if (!(v > 0.0 && v < 1.0)) fail(name, "must lie in (0,1)");
  };
  rate("beta1", train.beta1);
  rate("beta2", train.beta2);
  if (!(train.alpha0 >= 0.0 && train.alpha0 < 1.0)) fail("alpha0", "must lie in [0,1)");
  if (!(train.adam_eps > 0.0)) fail("adam_eps", "must be positive");
  if (!(train.weight_decay >= 0.0 && train.weight_decay < 1.0)) fail("weight_decay", "must lie in [0,1)");
  if (!(train.dropout_fc >= 0.0 && train.dropout_fc < 1.0)) fail("dropout_fc", "must lie in [0,1)");
  if (!(train.dropout_lstm >= 0.0 && train.dropout_lstm < 1.0)) fail("dropout_lstm", "must lie in [0,1)");
  if (!(train.decay_epochs >= 1.0)) fail("decay_epochs", "must be at least 1");
  if (train.batch_size == 0) fail("batch_size", "must be positive");
}

DcnConfig full_scale_config(HeadVariant head, std::size_t n_answers) {
  DcnConfig cfg;
  cfg.d = 1024;
  cfg.h = 4;
  cfg.K = 3;
  cfg.L = 3;
  cfg.T = 196;
  cfg.N_max = 14;
  cfg.e = 300;
  cfg.c = 256;
  cfg.layer_attn_hidden = 724;
  cfg.summary_hidden = 0;
  cfg.head_hidden = 1024;
  cfg.head = head;
  cfg.data.n_attributes = n_answers;
  cfg.data.n_objects = 8;
  return cfg;
}

json to_json(const DcnConfig& c) {
  return json{
      {"d", c.d},
      {"h", c.h},
      {"K", c.K},
      {"L", c.L},
      {"T", c.T},
      {"N_max", c.N_max},
      {"e", c.e},
      {"c", c.c},
      {"layer_attn_hidden", c.layer_attn_hidden},
      {"summary_hidden", c.summary_hidden},
      {"head_hidden", c.head_hidden},
      {"direction", to_string(c.direction)},
      {"head", static_cast<int>(c.head)},
      {"summary", to_string(c.summary)},
      {"extraction", to_string(c.extraction)},
      {"n_objects", c.data.n_objects},
      {"n_attributes", c.data.n_attributes},
      {"min_objects", c.data.min_objects},
      {"n_train", c.data.n_train},
      {"n_test", c.data.n_test},
      {"noise", c.data.noise},
      {"data_seed", c.data.data_seed},
      {"alpha0", c.train.alpha0},
      {"beta1", c.train.beta1},
      {"beta2", c.train.beta2},
      {"adam_eps", c.train.adam_eps},
      {"decay_epochs", c.train.decay_epochs},
      {"max_epochs", c.train.max_epochs},
      {"batch_size", c.train.batch_size},
      {"weight_decay", c.train.weight_decay},
      {"dropout_fc", c.train.dropout_fc},
      {"dropout_lstm", c.train.dropout_lstm},
      {"seed", c.train.seed},
  };
}

namespace {

void set_field(DcnConfig& c, const std::string& key, const json& v) {
  auto uint = [&](std::size_t& dst) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
      throw ConfigError("invalid config field '" + key + "': expected a non-negative integer");
    }
    dst = v.get<std::size_t>();
  };
  auto u64 = [&](std::uint64_t& dst) {
    std::size_t tmp = 0;
    uint(tmp);
    dst = tmp;
  };
  auto real = [&](double& dst) {
    if (!v.is_number()) throw ConfigError("invalid config field '" + key + "': expected a number");
    dst = v.get<double>();
  };
  auto text = [&]() {
    if (!v.is_string()) throw ConfigError("invalid config field '" + key + "': expected a string");
    return v.get<std::string>();
  };

  if (key == "d") uint(c.d);
  else if (key == "h") uint(c.h);
  else if (key == "K") uint(c.K);
  else if (key == "L") uint(c.L);
  else if (key == "T") uint(c.T);
  else if (key == "N_max") uint(c.N_max);
  else if (key == "e") uint(c.e);
  else if (key == "c") uint(c.c);
  else if (key == "layer_attn_hidden") uint(c.layer_attn_hidden);
  else if (key == "summary_hidden") uint(c.summary_hidden);
  else if (key == "head_hidden") uint(c.head_hidden);
  else if (key == "direction") {
    const auto s = text();
    if (s == "both") c.direction = DirectionMode::Both;
    else if (s == "image_guided") c.direction = DirectionMode::ImageGuided;
    else if (s == "question_guided") c.direction = DirectionMode::QuestionGuided;
    else throw ConfigError("invalid config field 'direction': unknown mode '" + s + "'");
  } else if (key == "head") {
    std::size_t h = 0;
    uint(h);
    if (h != 16 && h != 17 && h != 18) throw ConfigError("invalid config field 'head': must be 16, 17 or 18");
    c.head = static_cast<HeadVariant>(h);
  } else if (key == "summary") {
    const auto s = text();
    if (s == "attention") c.summary = SummaryMode::Attention;
    else if (s == "average") c.summary = SummaryMode::Average;
    else throw ConfigError("invalid config field 'summary': unknown mode '" + s + "'");
  } else if (key == "extraction") {
    const auto s = text();
    if (s == "layer_attention") c.extraction = ExtractionMode::LayerAttention;
    else if (s == "last_layer") c.extraction = ExtractionMode::LastLayer;
    else throw ConfigError("invalid config field 'extraction': unknown mode '" + s + "'");
  }
  else if (key == "n_objects") uint(c.data.n_objects);
  else if (key == "n_attributes") uint(c.data.n_attributes);
  else if (key == "min_objects") uint(c.data.min_objects);
  else if (key == "n_train") uint(c.data.n_train);
  else if (key == "n_test") uint(c.data.n_test);
  else if (key == "noise") real(c.data.noise);
  else if (key == "data_seed") u64(c.data.data_seed);
  else if (key == "alpha0") real(c.train.alpha0);
  else if (key == "beta1") real(c.train.beta1);
  else if (key == "beta2") real(c.train.beta2);
  else if (key == "adam_eps") real(c.train.adam_eps);
  else if (key == "decay_epochs") real(c.train.decay_epochs);
  else if (key == "max_epochs") uint(c.train.max_epochs);
  else if (key == "batch_size") uint(c.train.batch_size);
  else if (key == "weight_decay") real(c.train.weight_decay);
  else if (key == "dropout_fc") real(c.train.dropout_fc);
  else if (key == "dropout_lstm") real(c.train.dropout_lstm);
  else if (key == "seed") u64(c.train.seed);
  else throw ConfigError("invalid config field '" + key + "': unknown key");
}

}  // namespace

DcnConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("invalid config: top level must be a JSON object");
  DcnConfig cfg;
  for (const auto& [key, value] : j.items()) set_field(cfg, key, value);
  cfg.validate();
  return cfg;
}

DcnConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON in ") + path + ": " + e.what());
  }
  return config_from_json(j);
}

void apply_override(DcnConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  set_field(cfg, key, value);
}

}  // namespace dcn
