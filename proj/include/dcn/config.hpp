#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include <json.hpp>

namespace dcn {

// Token ids below this are reserved: 0 is unk, the rest are question template
// words. Object words follow, then attribute (answer) words.
inline constexpr std::size_t kFirstObjectToken = 10;

enum class DirectionMode { Both, ImageGuided, QuestionGuided };
enum class HeadVariant { Inner = 16, SumMlp = 17, CatMlp = 18 };
enum class SummaryMode { Attention, Average };
enum class ExtractionMode { LayerAttention, LastLayer };

std::string_view to_string(DirectionMode m);
std::string_view to_string(SummaryMode m);
std::string_view to_string(ExtractionMode m);

struct TrainConfig {
  double alpha0 = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double adam_eps = 1e-8;
  double decay_epochs = 7;
  std::size_t max_epochs = 20;
  std::size_t batch_size = 32;
  double weight_decay = 0.0001;
  double dropout_fc = 0.3;
  double dropout_lstm = 0.1;
  std::uint64_t seed = 1;
};

// Synthetic planted-rule task.
struct DataConfig {
  std::size_t n_objects = 8;
  std::size_t n_attributes = 8;
  // Each image shows a uniform draw from [min_objects, n_objects] objects.
  std::size_t min_objects = 4;
  std::size_t n_train = 5000;
  std::size_t n_test = 1000;
  double noise = 0.5;
  std::uint64_t data_seed = 7;
};

struct DcnConfig {
  std::size_t d = 32;
  std::size_t h = 4;
  std::size_t K = 3;
  std::size_t L = 3;
  std::size_t T = 16;
  std::size_t N_max = 14;
  std::size_t e = 16;
  // base channel count of the finest feature level
  std::size_t c = 8;
  std::size_t layer_attn_hidden = 32;
  // 0 means "same as d"
  std::size_t summary_hidden = 0;
  std::size_t head_hidden = 64;
  DirectionMode direction = DirectionMode::Both;
  HeadVariant head = HeadVariant::SumMlp;
  SummaryMode summary = SummaryMode::Attention;
  ExtractionMode extraction = ExtractionMode::LayerAttention;
  DataConfig data;
  TrainConfig train;

  std::size_t d_head() const { return d / h; }
  std::size_t grid_side() const;
  std::size_t n_answers() const { return data.n_attributes; }
  std::size_t vocab_size() const;
  std::size_t summary_width() const { return summary_hidden == 0 ? d : summary_hidden; }
  // Channels and spatial size of feature level j in [0, 4).
  std::size_t level_channels(std::size_t j) const { return c << j; }
  std::size_t level_size(std::size_t j) const { return grid_side() << (3 - j); }

  // Throws ConfigError naming the offending field.
  void validate() const;
};

// Full-size dimensions (1024-d features, 14x14 grid, 3113 answers) used for
// parameter counting.
DcnConfig full_scale_config(HeadVariant head, std::size_t n_answers = 3113);

nlohmann::json to_json(const DcnConfig& cfg);
// Unknown keys and type errors raise ConfigError naming the key.
DcnConfig config_from_json(const nlohmann::json& j);
DcnConfig load_config(const std::string& path);
// Applies a `key=value` override; value is parsed as JSON, falling back to a
// bare string.
void apply_override(DcnConfig& cfg, std::string_view assignment);

}  // namespace dcn
