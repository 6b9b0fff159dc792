#pragma once

#include <array>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "dcn/config.hpp"
#include "dcn/model.hpp"

namespace dcn {

// Grid of T regions holding between min_objects and n_objects distinct
// objects, one region each; the rest of the regions are background. The
// question names one of the present objects and the answer is its attribute.
struct SyntheticSample {
  std::vector<std::size_t> objects;     // per region; n_objects marks background
  std::vector<std::size_t> attributes;  // per region; n_attributes marks "none"
  TokenSequence question;
  std::size_t queried_object = 0;
  std::size_t answer = 0;
  std::size_t question_type = 0;
  std::uint64_t noise_seed = 0;
};

inline constexpr std::size_t kQuestionTypes = 4;

struct Dataset {
  std::vector<SyntheticSample> samples;
  std::vector<ModelInput> inputs;     // materialized pooled features
  std::vector<std::size_t> oracle;    // oracle answer for every sample

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
};

class SyntheticTask {
 public:
  // Per-level object and attribute codes are drawn from cfg.data.data_seed.
  explicit SyntheticTask(const DcnConfig& cfg);

  std::size_t object_token(std::size_t obj) const { return kFirstObjectToken + obj; }
  std::size_t attribute_token(std::size_t attr) const {
    return kFirstObjectToken + cfg_.data.n_objects + attr;
  }

  SyntheticSample make_sample(std::uint64_t seed) const;
  std::vector<SyntheticSample> generate(std::size_t n, std::uint64_t seed) const;

  // Full multi-scale maps: level j is (c 2^j) x (side 2^(3-j)) x (side 2^(3-j)).
  std::array<Tensor, kNumLevels> render(const SyntheticSample& s) const;
  // render() followed by max pooling to the region grid, as C_j x T.
  std::array<Tensor, kNumLevels> pooled(const SyntheticSample& s) const;
  ModelInput input(const SyntheticSample& s) const;

  // Materializes inputs and the oracle table.
  Dataset build(std::vector<SyntheticSample> samples) const;
  Dataset generate_dataset(std::size_t n, std::uint64_t seed) const;

  // Answers by direct lookup of the queried object's region.
  std::size_t oracle_answer(const SyntheticSample& s) const;

  const DcnConfig& config() const { return cfg_; }

 private:
  DcnConfig cfg_;
  std::array<Tensor, kNumLevels> object_codes_;     // (n_objects + 1) x C_j
  std::array<Tensor, kNumLevels> attribute_codes_;  // n_attributes x C_j
};

// One sample per line: noise_seed | question ids | region objects | region
// attributes | question type. Lines starting with '#' are comments.
void write_samples(const std::string& path, const std::vector<SyntheticSample>& samples);
void write_samples(std::ostream& out, const std::vector<SyntheticSample>& samples);
std::vector<SyntheticSample> read_samples(const std::string& path, const DcnConfig& cfg);

}  // namespace dcn
