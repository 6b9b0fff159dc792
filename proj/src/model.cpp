#include "dcn/model.hpp"

#include <cmath>

#include <fstream>

#include "dcn/ops.hpp"

namespace dcn {

std::vector<TokenSequence> answer_tokens(const DcnConfig& cfg) {
  std::vector<TokenSequence> out;
  out.reserve(cfg.n_answers());
  const std::size_t first = kFirstObjectToken + cfg.data.n_objects;
  for (std::size_t a = 0; a < cfg.n_answers(); ++a) out.push_back({first + a});
  return out;
}

std::vector<ParamSpec> model_param_specs(const DcnConfig& cfg) {
  cfg.validate();
  std::vector<ParamSpec> specs = encoder::lstm_specs(cfg.d, cfg.e);
  if (cfg.extraction == ExtractionMode::LayerAttention) {
    std::array<std::size_t, kNumLevels> channels{};
    for (std::size_t j = 0; j < kNumLevels; ++j) channels[j] = cfg.level_channels(j);
    auto la = encoder::layer_attn_specs(cfg.d, channels, cfg.layer_attn_hidden);
    specs.insert(specs.end(), la.begin(), la.end());
  } else {
    specs.push_back({"encoder.proj3", {cfg.d, cfg.level_channels(3)}, Init::Glorot, "image"});
  }
  for (std::size_t l = 0; l < cfg.L; ++l) {
    auto layer = coattn::layer_specs(l, cfg.d, cfg.K);
    specs.insert(specs.end(), layer.begin(), layer.end());
  }
  if (cfg.summary == SummaryMode::Attention) {
    for (const char* side : {"predict.summary_q", "predict.summary_v"}) {
      auto m = predict::mlp_specs(side, cfg.d, cfg.summary_width(), 1, "predict");
      specs.insert(specs.end(), m.begin(), m.end());
    }
  }
  switch (cfg.head) {
    case HeadVariant::Inner:
      specs.push_back({"predict.head.W", {cfg.d, cfg.d}, Init::Glorot, "head"});
      break;
    case HeadVariant::SumMlp: {
      auto m = predict::mlp_specs("predict.head", cfg.d, cfg.head_hidden, cfg.n_answers(), "head");
      specs.insert(specs.end(), m.begin(), m.end());
      break;
    }
    case HeadVariant::CatMlp: {
      auto m = predict::mlp_specs("predict.head", 2 * cfg.d, cfg.head_hidden, cfg.n_answers(), "head");
      specs.insert(specs.end(), m.begin(), m.end());
      break;
    }
  }
  return specs;
}

DcnModel::DcnModel(const DcnConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), store_(std::make_unique<ParamStore>()), answers_(answer_tokens(cfg)) {
  Rng rng(seed);
  for (const auto& spec : model_param_specs(cfg_)) store_->add(spec, rng);
  // frozen stand-in for pretrained word vectors: random unit-norm rows, so
  // word columns start on the same scale as the normalized image columns
  Rng emb_rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  embedding_ = Tensor({cfg_.vocab_size(), cfg_.e});
  for (std::size_t r = 0; r < embedding_.rows(); ++r) {
    double n2 = 0.0;
    for (std::size_t k = 0; k < cfg_.e; ++k) n2 += std::pow(embedding_.at(r, k) = normal(emb_rng), 2);
    for (std::size_t k = 0; k < cfg_.e; ++k) embedding_.at(r, k) /= std::sqrt(n2);
  }
  bind();
}

void DcnModel::bind() {
  lstm_ = encoder::bind_lstm(*store_);
  if (cfg_.extraction == ExtractionMode::LayerAttention) {
    layer_attn_ = encoder::bind_layer_attn(*store_);
  } else {
    layer_attn_ = {};
    layer_attn_.proj[3] = &store_->get("encoder.proj3");
  }
  layers_.clear();
  for (std::size_t l = 0; l < cfg_.L; ++l) layers_.push_back(coattn::bind_layer(*store_, l, cfg_.h));
  if (cfg_.summary == SummaryMode::Attention) {
    summary_q_ = predict::bind_mlp(*store_, "predict.summary_q");
    summary_v_ = predict::bind_mlp(*store_, "predict.summary_v");
  }
  if (cfg_.head == HeadVariant::Inner) {
    head_inner_ = &store_->get("predict.head.W");
  } else {
    head_mlp_ = predict::bind_mlp(*store_, "predict.head");
  }
}

ForwardResult DcnModel::forward(Graph& g, const ModelInput& input, const DropoutContext& drop) const {
  validate_tokens(input.question, cfg_.vocab_size(), cfg_.N_max);
  ForwardResult r;
  const auto enc = encoder::encode_question(g, input.question, embedding_, lstm_, drop);
  r.Q0 = enc.Q;

  for (std::size_t j = 0; j < kNumLevels; ++j) {
    const Tensor& pooled = input.pooled[j];
    if (pooled.rows() != cfg_.level_channels(j) || pooled.cols() != cfg_.T) {
      throw DimensionError("pooled level " + std::to_string(j) + " has shape " + shape_str(pooled.shape()) +
                           ", expected [" + std::to_string(cfg_.level_channels(j)) + "x" +
                           std::to_string(cfg_.T) + "]");
    }
  }
  if (cfg_.extraction == ExtractionMode::LayerAttention) {
    std::array<Var, kNumLevels> levels;
    for (std::size_t j = 0; j < kNumLevels; ++j) {
      levels[j] = encoder::project_pooled(g.constant(input.pooled[j]), g.param(*layer_attn_.proj[j]));
    }
    const auto fused = encoder::layer_attention_fuse(enc.s_Q, levels, layer_attn_, drop);
    r.V0 = fused.V;
    r.layer_alpha = fused.alpha;
  } else {
    r.V0 = encoder::project_pooled(g.constant(input.pooled[3]), g.param(*layer_attn_.proj[3]));
    r.layer_alpha = g.constant(Tensor::column(std::vector<double>{0.0, 0.0, 0.0, 1.0}));
  }

  r.layers = coattn::dcn_stack(r.Q0, r.V0, layers_, cfg_.direction);
  const Var QL = r.layers.back().Q;
  const Var VL = r.layers.back().V;
  const bool attend = cfg_.summary == SummaryMode::Attention;
  r.question_summary = predict::self_attend_summary(QL, attend ? &summary_q_ : nullptr, drop);
  r.image_summary = predict::self_attend_summary(VL, attend ? &summary_v_ : nullptr, drop);

  const Var sq = r.question_summary.s;
  const Var sv = r.image_summary.s;
  switch (cfg_.head) {
    case HeadVariant::Inner: {
      const Var S_A = encoder::encode_answers(g, answers_, embedding_, lstm_);
      r.scores = predict::score_inner(sq, sv, S_A, g.param(*head_inner_));
      break;
    }
    case HeadVariant::SumMlp:
      r.scores = predict::score_sum_mlp(sq, sv, head_mlp_, drop);
      break;
    case HeadVariant::CatMlp:
      r.scores = predict::score_cat_mlp(sq, sv, head_mlp_, drop);
      break;
  }
  return r;
}

Tensor DcnModel::predict_scores(const ModelInput& input) const {
  Graph g;
  return forward(g, input).scores.value();
}

void DcnModel::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  nlohmann::json names = nlohmann::json::array();
  for (std::size_t i = 0; i < store_->size(); ++i) {
    const Parameter& p = (*store_)[i];
    save_tensor(dir / (p.name + ".dcnt"), p.value);
    names.push_back(p.name);
  }
  save_tensor(dir / "embedding.dcnt", embedding_);
  nlohmann::json manifest{{"config", to_json(cfg_)}, {"tensors", names}, {"frozen", {"embedding"}}};
  std::ofstream out(dir / "manifest.json");
  if (!out) throw InputError("cannot write manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

DcnModel DcnModel::load(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw InputError("no manifest.json in " + dir.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError("malformed manifest in " + dir.string() + ": " + e.what());
  }
  DcnModel model(config_from_json(manifest.at("config")), 0);
  const auto& names = manifest.at("tensors");
  if (names.size() != model.store_->size()) {
    throw InputError("checkpoint lists " + std::to_string(names.size()) + " tensors, model has " +
                     std::to_string(model.store_->size()));
  }
  for (const auto& name : names) {
    Parameter& p = model.store_->get(name.get<std::string>());
    Tensor t = load_tensor(dir / (p.name + ".dcnt"));
    if (t.shape() != p.value.shape()) {
      throw InputError("tensor " + p.name + " has shape " + shape_str(t.shape()) + ", expected " +
                       shape_str(p.value.shape()));
    }
    p.value = std::move(t);
  }
  model.embedding_ = load_tensor(dir / "embedding.dcnt");
  return model;
}

}  // namespace dcn
