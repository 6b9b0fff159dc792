#include "dcn/encoder.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "dcn/ops.hpp"

namespace dcn {

void validate_tokens(const TokenSequence& tokens, std::size_t vocab_size, std::size_t n_max) {
  if (tokens.empty()) throw InputError("token sequence is empty");
  if (tokens.size() > n_max) {
    throw InputError("token sequence length " + std::to_string(tokens.size()) + " exceeds cap " +
                     std::to_string(n_max));
  }
  for (auto id : tokens) {
    if (id >= vocab_size) {
      throw InputError("token id " + std::to_string(id) + " outside vocabulary of size " +
                       std::to_string(vocab_size));
    }
  }
}

std::vector<TokenSequence> read_token_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open token file " + path);
  std::vector<TokenSequence> out;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    TokenSequence seq;
    long long id = 0;
    while (ls >> id) {
      if (id < 0) throw InputError("negative token id in " + path);
      seq.push_back(static_cast<std::size_t>(id));
    }
    if (!ls.eof()) throw InputError("non-integer token in " + path + ": " + line);
    if (!seq.empty()) out.push_back(std::move(seq));
  }
  return out;
}

void write_token_file(const std::string& path, std::span<const TokenSequence> seqs) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open " + path + " for writing");
  for (const auto& seq : seqs) {
    for (std::size_t i = 0; i < seq.size(); ++i) out << (i ? " " : "") << seq[i];
    out << '\n';
  }
}

namespace encoder {

std::vector<ParamSpec> lstm_specs(std::size_t d, std::size_t e, const std::string& prefix) {
  if (d % 2 != 0) throw ConfigError("invalid config field 'd': Bi-LSTM needs an even d");
  const std::size_t hid = d / 2;
  std::vector<ParamSpec> specs;
  for (const char* dir : {"fwd", "bwd"}) {
    const std::string p = prefix + "." + dir;
    specs.push_back({p + ".W", {4 * hid, e}, Init::Glorot, "encoder"});
    specs.push_back({p + ".U", {4 * hid, hid}, Init::Orthogonal, "encoder"});
    specs.push_back({p + ".b", {4 * hid, 1}, Init::ForgetBias, "encoder"});
  }
  specs.push_back({prefix + ".R", {d, e}, Init::Glorot, "encoder"});
  return specs;
}

LstmParams bind_lstm(ParamStore& store, const std::string& prefix) {
  auto dir = [&](const char* name) {
    const std::string p = prefix + "." + name;
    return LstmDirection{&store.get(p + ".W"), &store.get(p + ".U"), &store.get(p + ".b")};
  };
  return LstmParams{dir("fwd"), dir("bwd"), &store.get(prefix + ".R")};
}

LstmState lstm_step(Var x, LstmState prev, const LstmDirection& p) {
  Graph& g = *x.graph;
  const std::size_t hid = p.U->value.cols();
  if (p.W->value.cols() != x.rows() || prev.h.rows() != hid || prev.c.rows() != hid) {
    throw DimensionError("lstm_step: input " + shape_str(x.shape()) + " / state " +
                         shape_str(prev.h.shape()) + " incompatible with W " +
                         shape_str(p.W->value.shape()));
  }
  const Var pre = ops::add_bias(
      ops::add(ops::matmul(g.param(*p.W), x), ops::matmul(g.param(*p.U), prev.h)), g.param(*p.b));
  const Var i = ops::sigmoid(ops::slice_rows(pre, 0, hid));
  const Var f = ops::sigmoid(ops::slice_rows(pre, hid, hid));
  const Var o = ops::sigmoid(ops::slice_rows(pre, 2 * hid, hid));
  const Var cand = ops::tanh(ops::slice_rows(pre, 3 * hid, hid));
  const Var c = ops::add(ops::mul(f, prev.c), ops::mul(i, cand));
  const Var h = ops::mul(o, ops::tanh(c));
  return {h, c};
}

Var embed(Graph& g, const TokenSequence& tokens, const Tensor& table) {
  if (tokens.empty()) throw InputError("embed: empty token sequence");
  const std::size_t e = table.cols();
  Tensor x({e, tokens.size()});
  for (std::size_t n = 0; n < tokens.size(); ++n) {
    if (tokens[n] >= table.rows()) {
      throw InputError("token id " + std::to_string(tokens[n]) + " outside embedding table " +
                       shape_str(table.shape()));
    }
    for (std::size_t k = 0; k < e; ++k) x.at(k, n) = table.at(tokens[n], k);
  }
  return g.constant(std::move(x));
}

namespace {

struct BiStates {
  std::vector<Var> fwd;  // fwd[n] = forward hidden after reading position n
  std::vector<Var> bwd;  // bwd[n] = backward hidden after reading position n
};

// Runs both directions over B equal-length sequences whose step-n inputs are
// the columns of xs[n].
BiStates run_bilstm(Graph& g, const std::vector<Var>& xs, std::size_t batch, const LstmParams& p) {
  const std::size_t hid = p.hidden();
  const std::size_t len = xs.size();
  const Var zero = g.constant(Tensor({hid, batch}));
  BiStates out;
  out.fwd.resize(len);
  out.bwd.resize(len);
  LstmState s{zero, zero};
  for (std::size_t n = 0; n < len; ++n) {
    s = lstm_step(xs[n], s, p.fwd);
    out.fwd[n] = s.h;
  }
  s = {zero, zero};
  for (std::size_t n = len; n-- > 0;) {
    s = lstm_step(xs[n], s, p.bwd);
    out.bwd[n] = s.h;
  }
  return out;
}

}  // namespace

EncodedQuestion encode_question(Graph& g, const TokenSequence& tokens, const Tensor& table,
                                const LstmParams& p, const DropoutContext& drop) {
  if (tokens.empty()) throw InputError("encode_question: empty token sequence");
  const std::size_t n_tok = tokens.size();
  const std::size_t hid = p.hidden();
  const Var x = embed(g, tokens, table);
  std::vector<Var> cols(n_tok);
  for (std::size_t n = 0; n < n_tok; ++n) cols[n] = ops::slice_cols(x, n, 1);
  const BiStates st = run_bilstm(g, cols, 1, p);

  const Var hidden = drop.lstm(ops::concat_rows({ops::concat_cols(st.fwd), ops::concat_cols(st.bwd)}));
  const Var residual = ops::matmul(g.param(*p.R), x);
  EncodedQuestion out;
  out.Q = ops::add(hidden, residual);
  out.s_Q = ops::concat_rows({ops::slice_cols(ops::slice_rows(hidden, 0, hid), n_tok - 1, 1),
                              ops::slice_cols(ops::slice_rows(hidden, hid, hid), 0, 1)});
  return out;
}

Var encode_answer(Graph& g, const TokenSequence& tokens, const Tensor& table, const LstmParams& p) {
  return encode_answers(g, std::span<const TokenSequence>(&tokens, 1), table, p);
}

Var encode_answers(Graph& g, std::span<const TokenSequence> answers, const Tensor& table,
                   const LstmParams& p) {
  if (answers.empty()) throw InputError("encode_answers: no answers");
  std::map<std::size_t, std::vector<std::size_t>> by_length;
  for (std::size_t i = 0; i < answers.size(); ++i) {
    if (answers[i].empty()) throw InputError("encode_answers: empty answer sequence");
    by_length[answers[i].size()].push_back(i);
  }
  std::vector<Var> summary_of(answers.size());
  for (const auto& [len, idx] : by_length) {
    const std::size_t batch = idx.size();
    std::vector<Var> xs(len);
    for (std::size_t n = 0; n < len; ++n) {
      TokenSequence column_tokens(batch);
      for (std::size_t b = 0; b < batch; ++b) column_tokens[b] = answers[idx[b]][n];
      xs[n] = embed(g, column_tokens, table);
    }
    const BiStates st = run_bilstm(g, xs, batch, p);
    const Var summaries = ops::concat_rows({st.fwd[len - 1], st.bwd[0]});  // d x batch
    if (by_length.size() == 1) {
      // already in input order
      return summaries;
    }
    for (std::size_t b = 0; b < batch; ++b) summary_of[idx[b]] = ops::slice_cols(summaries, b, 1);
  }
  return ops::concat_cols(summary_of);
}

std::vector<ParamSpec> layer_attn_specs(std::size_t d, std::span<const std::size_t> channels,
                                        std::size_t hidden, const std::string& prefix) {
  if (channels.size() != kNumLevels) throw ConfigError("layer attention needs exactly four levels");
  std::vector<ParamSpec> specs;
  for (std::size_t j = 0; j < kNumLevels; ++j) {
    specs.push_back({prefix + ".proj" + std::to_string(j), {d, channels[j]}, Init::Glorot, "image"});
  }
  specs.push_back({prefix + ".layer_attn.W1", {hidden, d}, Init::Glorot, "image"});
  specs.push_back({prefix + ".layer_attn.b1", {hidden, 1}, Init::Zero, "image"});
  specs.push_back({prefix + ".layer_attn.W2", {kNumLevels, hidden}, Init::Glorot, "image"});
  specs.push_back({prefix + ".layer_attn.b2", {kNumLevels, 1}, Init::Zero, "image"});
  return specs;
}

LayerAttnParams bind_layer_attn(ParamStore& store, const std::string& prefix) {
  LayerAttnParams p;
  for (std::size_t j = 0; j < kNumLevels; ++j) p.proj[j] = &store.get(prefix + ".proj" + std::to_string(j));
  p.W1 = &store.get(prefix + ".layer_attn.W1");
  p.b1 = &store.get(prefix + ".layer_attn.b1");
  p.W2 = &store.get(prefix + ".layer_attn.W2");
  p.b2 = &store.get(prefix + ".layer_attn.b2");
  return p;
}

Var project_pooled(Var pooled, Var projection) {
  return ops::l2_normalize_cols(ops::matmul(projection, pooled));
}

Var pool_project(Var map, std::size_t grid_side, Var projection) {
  // copy: adding nodes below may move the graph's storage
  const Shape shape = map.shape();
  if (shape.size() != 3 || shape[1] != shape[2]) {
    throw DimensionError("pool_project expects a C x H x H map, got " + shape_str(shape));
  }
  const std::size_t size = shape[1];
  if (grid_side == 0 || size % grid_side != 0) {
    throw ConfigError("feature map size " + std::to_string(size) + " not divisible by grid side " +
                      std::to_string(grid_side));
  }
  const Var pooled = ops::max_pool2d(map, size / grid_side);
  return project_pooled(ops::reshape(pooled, {shape[0], grid_side * grid_side}), projection);
}

FusedImage layer_attention_fuse(Var s_Q, std::span<const Var> levels, const LayerAttnParams& p,
                                const DropoutContext& drop) {
  if (levels.size() != kNumLevels) throw DimensionError("layer_attention_fuse needs four levels");
  for (const Var& lv : levels) {
    if (lv.shape() != levels[0].shape()) {
      throw DimensionError("layer_attention_fuse: level shapes differ " + shape_str(levels[0].shape()) +
                           " vs " + shape_str(lv.shape()));
    }
  }
  Graph& g = *s_Q.graph;
  const Var hidden =
      drop.fc(ops::relu(ops::add_bias(ops::matmul(g.param(*p.W1), s_Q), g.param(*p.b1))));
  const Var scores = ops::add_bias(ops::matmul(g.param(*p.W2), hidden), g.param(*p.b2));
  const Var alpha = ops::reshape(ops::softmax_rows(ops::reshape(scores, {1, kNumLevels})), {kNumLevels, 1});
  return {ops::weighted_sum(levels, alpha), alpha};
}

}  // namespace encoder
}  // namespace dcn
