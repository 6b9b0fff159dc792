#include "dcn/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

namespace dcn {

namespace {

// Question templates over the reserved vocabulary; kObjectSlot marks where the
// object word goes.
constexpr std::size_t kObjectSlot = ~std::size_t{0};
enum Word : std::size_t { kWhat = 1, kAttribute, kIs, kThe, kOf, kWhich, kDoes, kHave, kQuestionMark };

const std::array<std::vector<std::size_t>, kQuestionTypes>& templates() {
  static const std::array<std::vector<std::size_t>, kQuestionTypes> t{{
      {kWhat, kAttribute, kIs, kThe, kObjectSlot, kQuestionMark},
      {kThe, kObjectSlot, kHave, kWhich, kAttribute, kQuestionMark},
      {kObjectSlot, kQuestionMark},
      {kWhich, kAttribute, kOf, kThe, kObjectSlot, kDoes, kHave, kQuestionMark},
  }};
  return t;
}

// Relative strength of object vs attribute evidence per feature level.
constexpr std::array<double, kNumLevels> kObjectWeight = {1.0, 0.8, 0.6, 0.4};
constexpr std::array<double, kNumLevels> kAttributeWeight = {0.4, 0.6, 0.8, 1.0};

}  // namespace

SyntheticTask::SyntheticTask(const DcnConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(derive_seed({cfg_.data.data_seed, 0xC0DE}));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t j = 0; j < kNumLevels; ++j) {
    const std::size_t ch = cfg_.level_channels(j);
    object_codes_[j] = Tensor({cfg_.data.n_objects + 1, ch});
    attribute_codes_[j] = Tensor({cfg_.data.n_attributes, ch});
    for (auto& v : object_codes_[j].values()) v = kObjectWeight[j] * normal(rng);
    for (auto& v : attribute_codes_[j].values()) v = kAttributeWeight[j] * normal(rng);
  }
}

SyntheticSample SyntheticTask::make_sample(std::uint64_t seed) const {
  const std::size_t T = cfg_.T;
  const std::size_t n_obj = cfg_.data.n_objects;
  const std::size_t n_attr = cfg_.data.n_attributes;
  Rng rng(seed);

  SyntheticSample s;
  s.noise_seed = derive_seed({seed, 0x4E01});
  s.objects.assign(T, n_obj);
  s.attributes.assign(T, n_attr);

  std::vector<std::size_t> regions(T);
  std::iota(regions.begin(), regions.end(), 0);
  std::shuffle(regions.begin(), regions.end(), rng);

  const std::size_t present =
      std::uniform_int_distribution<std::size_t>(cfg_.data.min_objects, n_obj)(rng);
  std::vector<std::size_t> objs(n_obj);
  std::iota(objs.begin(), objs.end(), 0);
  std::shuffle(objs.begin(), objs.end(), rng);
  std::vector<std::size_t> attrs(n_attr);
  std::iota(attrs.begin(), attrs.end(), 0);
  std::shuffle(attrs.begin(), attrs.end(), rng);
  std::uniform_int_distribution<std::size_t> any_attr(0, n_attr - 1);
  for (std::size_t i = 0; i < present; ++i) {
    s.objects[regions[i]] = objs[i];
    // distinct attributes whenever there are enough of them
    s.attributes[regions[i]] = n_attr >= n_obj ? attrs[i] : any_attr(rng);
  }

  s.queried_object = objs[std::uniform_int_distribution<std::size_t>(0, present - 1)(rng)];
  s.question_type = std::uniform_int_distribution<std::size_t>(0, kQuestionTypes - 1)(rng);
  for (std::size_t w : templates()[s.question_type]) {
    s.question.push_back(w == kObjectSlot ? object_token(s.queried_object) : w);
  }
  s.answer = oracle_answer(s);
  return s;
}

std::vector<SyntheticSample> SyntheticTask::generate(std::size_t n, std::uint64_t seed) const {
  std::vector<SyntheticSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(make_sample(derive_seed({seed, i})));
  return out;
}

std::size_t SyntheticTask::oracle_answer(const SyntheticSample& s) const {
  for (std::size_t t = 0; t < s.objects.size(); ++t) {
    if (s.objects[t] == s.queried_object) return s.attributes[t];
  }
  throw InputError("sample does not contain the queried object");
}

std::array<Tensor, kNumLevels> SyntheticTask::render(const SyntheticSample& s) const {
  const std::size_t side = cfg_.grid_side();
  Rng rng(s.noise_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double sigma = cfg_.data.noise;
  std::array<Tensor, kNumLevels> maps;
  for (std::size_t j = 0; j < kNumLevels; ++j) {
    const std::size_t ch = cfg_.level_channels(j);
    const std::size_t size = cfg_.level_size(j);
    const std::size_t block = size / side;
    Tensor& m = maps[j];
    m = Tensor({ch, size, size});
    for (std::size_t k = 0; k < ch; ++k)
      for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
          const std::size_t region = (y / block) * side + x / block;
          double v = object_codes_[j].at(s.objects[region], k);
          if (s.attributes[region] < cfg_.data.n_attributes) v += attribute_codes_[j].at(s.attributes[region], k);
          m.at(k, y, x) = v + sigma * normal(rng);
        }
  }
  return maps;
}

std::array<Tensor, kNumLevels> SyntheticTask::pooled(const SyntheticSample& s) const {
  auto maps = render(s);
  const std::size_t side = cfg_.grid_side();
  std::array<Tensor, kNumLevels> out;
  for (std::size_t j = 0; j < kNumLevels; ++j) {
    const std::size_t window = cfg_.level_size(j) / side;
    out[j] = max_pool2d_plain(maps[j], window).reshaped({cfg_.level_channels(j), cfg_.T});
  }
  return out;
}

ModelInput SyntheticTask::input(const SyntheticSample& s) const { return {s.question, pooled(s)}; }

Dataset SyntheticTask::build(std::vector<SyntheticSample> samples) const {
  Dataset ds;
  ds.inputs.reserve(samples.size());
  ds.oracle.reserve(samples.size());
  for (const auto& s : samples) {
    ds.inputs.push_back(input(s));
    ds.oracle.push_back(oracle_answer(s));
  }
  ds.samples = std::move(samples);
  return ds;
}

Dataset SyntheticTask::generate_dataset(std::size_t n, std::uint64_t seed) const {
  return build(generate(n, seed));
}

namespace {

void write_list(std::ostream& out, const std::vector<std::size_t>& xs) {
  for (std::size_t i = 0; i < xs.size(); ++i) out << (i ? " " : "") << xs[i];
}

std::vector<std::size_t> parse_list(const std::string& field) {
  std::istringstream in(field);
  std::vector<std::size_t> out;
  long long v = 0;
  while (in >> v) {
    if (v < 0) throw InputError("negative id in sample file");
    out.push_back(static_cast<std::size_t>(v));
  }
  if (!in.eof()) throw InputError("non-integer entry in sample file: " + field);
  return out;
}

}  // namespace

void write_samples(const std::string& path, const std::vector<SyntheticSample>& samples) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open " + path + " for writing");
  write_samples(out, samples);
}

void write_samples(std::ostream& out, const std::vector<SyntheticSample>& samples) {
  for (const auto& s : samples) {
    out << s.noise_seed << " | ";
    write_list(out, s.question);
    out << " | ";
    write_list(out, s.objects);
    out << " | ";
    write_list(out, s.attributes);
    out << " | " << s.question_type << '\n';
  }
}

std::vector<SyntheticSample> read_samples(const std::string& path, const DcnConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open sample file " + path);
  std::vector<SyntheticSample> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::istringstream ls(line);
    std::string field;
    while (std::getline(ls, field, '|')) fields.push_back(field);
    if (fields.size() != 5) throw InputError("sample line needs 5 '|'-separated fields: " + line);
    SyntheticSample s;
    s.noise_seed = std::stoull(fields[0]);
    s.question = parse_list(fields[1]);
    s.objects = parse_list(fields[2]);
    s.attributes = parse_list(fields[3]);
    s.question_type = std::stoull(fields[4]);
    validate_tokens(s.question, cfg.vocab_size(), cfg.N_max);
    if (s.objects.size() != cfg.T || s.attributes.size() != cfg.T) {
      throw InputError("sample grid must list " + std::to_string(cfg.T) + " regions");
    }
    for (std::size_t t = 0; t < cfg.T; ++t) {
      if (s.objects[t] > cfg.data.n_objects || s.attributes[t] > cfg.data.n_attributes) {
        throw InputError("region id out of range: " + line);
      }
    }
    bool found = false;
    for (auto tok : s.question) {
      if (tok >= kFirstObjectToken && tok < kFirstObjectToken + cfg.data.n_objects) {
        s.queried_object = tok - kFirstObjectToken;
        found = true;
      }
    }
    if (!found) throw InputError("sample question names no object: " + line);
    const auto hits = std::count(s.objects.begin(), s.objects.end(), s.queried_object);
    if (hits != 1) throw InputError("queried object must appear in exactly one region: " + line);
    for (std::size_t t = 0; t < cfg.T; ++t)
      if (s.objects[t] == s.queried_object) s.answer = s.attributes[t];
    if (s.answer >= cfg.data.n_attributes) throw InputError("queried object has no attribute: " + line);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace dcn
