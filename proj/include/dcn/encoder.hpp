#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dcn/dropout.hpp"
#include "dcn/graph.hpp"
#include "dcn/params.hpp"

namespace dcn {

using TokenSequence = std::vector<std::size_t>;

inline constexpr std::size_t kUnkToken = 0;
inline constexpr std::size_t kNumLevels = 4;

// Throws InputError for an empty sequence, a sequence longer than n_max, or
// an id outside the vocabulary.
void validate_tokens(const TokenSequence& tokens, std::size_t vocab_size, std::size_t n_max);

// Newline-delimited lists of whitespace-separated token ids.
std::vector<TokenSequence> read_token_file(const std::string& path);
void write_token_file(const std::string& path, std::span<const TokenSequence> seqs);

namespace encoder {

// One LSTM direction with the four gates stacked row-wise as
// [input; forget; output; candidate], each hidden x (in or hidden).
struct LstmDirection {
  const Parameter* W = nullptr;  // 4h x e
  const Parameter* U = nullptr;  // 4h x h
  const Parameter* b = nullptr;  // 4h x 1
};

struct LstmParams {
  LstmDirection fwd;
  LstmDirection bwd;
  const Parameter* R = nullptr;  // d x e residual projection of the embedding

  std::size_t hidden() const { return U_rows() / 4; }
  std::size_t U_rows() const { return fwd.U->value.rows(); }
};

std::vector<ParamSpec> lstm_specs(std::size_t d, std::size_t e, const std::string& prefix = "encoder.lstm");
LstmParams bind_lstm(ParamStore& store, const std::string& prefix = "encoder.lstm");

struct LstmState {
  Var h;  // hidden x B
  Var c;  // hidden x B
};

// One step of a standard LSTM cell over a batch of B columns.
LstmState lstm_step(Var x, LstmState prev, const LstmDirection& p);

// e x N matrix of embedding columns; the table stays a graph constant.
Var embed(Graph& g, const TokenSequence& tokens, const Tensor& table);

struct EncodedQuestion {
  Var Q;    // d x N, column n = [fwd h_n; bwd h_n] + R e_n
  Var s_Q;  // d x 1, [fwd h_N; bwd h_1]
};

EncodedQuestion encode_question(Graph& g, const TokenSequence& tokens, const Tensor& table,
                                const LstmParams& p, const DropoutContext& drop = {});

// Summary vector [fwd h_M; bwd h_1] of a single answer, d x 1.
Var encode_answer(Graph& g, const TokenSequence& tokens, const Tensor& table, const LstmParams& p);
// Summaries of several answers as the columns of a d x B matrix. Answers of
// equal length share one batched pass.
Var encode_answers(Graph& g, std::span<const TokenSequence> answers, const Tensor& table,
                   const LstmParams& p);

struct LayerAttnParams {
  std::array<const Parameter*, kNumLevels> proj{};  // d x C_j, 1x1 convolution
  const Parameter* W1 = nullptr;                    // H x d
  const Parameter* b1 = nullptr;                    // H x 1
  const Parameter* W2 = nullptr;                    // 4 x H
  const Parameter* b2 = nullptr;                    // 4 x 1
};

std::vector<ParamSpec> layer_attn_specs(std::size_t d, std::span<const std::size_t> channels,
                                        std::size_t hidden, const std::string& prefix = "encoder");
LayerAttnParams bind_layer_attn(ParamStore& store, const std::string& prefix = "encoder");

// Projection and depth normalization of an already pooled C x T matrix.
Var project_pooled(Var pooled, Var projection);
// Max pool a C x H x H map with window H / sqrt(T), project to d x T and
// normalize every column. Throws ConfigError if H is not divisible.
Var pool_project(Var map, std::size_t grid_side, Var projection);

struct FusedImage {
  Var V;      // d x T
  Var alpha;  // 4 x 1 layer weights
};

FusedImage layer_attention_fuse(Var s_Q, std::span<const Var> levels, const LayerAttnParams& p,
                                const DropoutContext& drop = {});

}  // namespace encoder
}  // namespace dcn
