#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "focusmix/numerics/graph.hpp"

namespace focusmix::numerics {

// Every op appends one node (attention appends two) and registers an exact
// backward closure when the graph records. Shape errors throw DimensionError
// naming both shapes.

// W[m x n] x[n] + b[m]. `b` may be an invalid Var for no bias.
template <typename T>
Var affine(Graph<T>& g, Var x, Var W, Var b);
template <typename T>
Var linear(Graph<T>& g, Var x, Var W);
// Row-wise W x_i for X[S x n] -> [S x m].
template <typename T>
Var linear_rows(Graph<T>& g, Var X, Var W);

template <typename T>
Var add(Graph<T>& g, Var a, Var b);
// X[S x m] + b[m] on every row.
template <typename T>
Var add_row_broadcast(Graph<T>& g, Var X, Var b);
template <typename T>
Var scale(Graph<T>& g, Var x, T factor);
template <typename T>
Var sum_all(Graph<T>& g, std::span<const Var> xs);

template <typename T>
Var sigmoid(Graph<T>& g, Var x);
template <typename T>
Var tanh(Graph<T>& g, Var x);

// Concatenation of rank-1 values.
template <typename T>
Var concat(Graph<T>& g, std::span<const Var> parts);
// [A | B] for A[S x p], B[S x q].
template <typename T>
Var concat_cols(Graph<T>& g, Var A, Var B);
template <typename T>
Var row(Graph<T>& g, Var X, std::size_t r);
template <typename T>
Var stack_rows(Graph<T>& g, std::span<const Var> rows);
template <typename T>
Var slice(Graph<T>& g, Var x, std::size_t offset, std::size_t length);
template <typename T>
Var reshape(Graph<T>& g, Var x, Shape shape);

// Rows of E[V x d] -> [len x d]. Throws IndexError naming the offending id.
template <typename T>
Var embedding_lookup(Graph<T>& g, Var E, std::span<const int> ids);

// Gate parameters of one GRU direction.
struct GruVars {
  Var W_r, W_z, W_n;  // [d_h x d_in]
  Var U_r, U_z, U_n;  // [d_h x d_h]
  Var b_r, b_z, b_n;  // [d_h]
};

template <typename T>
GruVars gru_vars(Graph<T>& g, const ParamStore<T>& store, const std::string& prefix);
// Creates "<prefix>.W_r" ... "<prefix>.b_n" with Glorot-uniform matrices and zero biases.
template <typename T>
void init_gru(ParamStore<T>& store, const std::string& prefix, std::size_t d_in,
              std::size_t d_h, Rng& rng);

// r = sigmoid(W_r x + U_r h + b_r)
// z = sigmoid(W_z x + U_z h + b_z)
// n = tanh(W_n x + U_n (r * h) + b_n)
// h' = z * h + (1 - z) * n
template <typename T>
Var gru_step(Graph<T>& g, const GruVars& p, Var x, Var h);

// X[S x d_in] -> [S x 2 d_h]; row t = [forward state t ; backward state t],
// both directions starting from a zero state.
template <typename T>
Var bigru_encode(Graph<T>& g, const GruVars& fwd, const GruVars& bwd, Var X);

struct AttentionOut {
  Var context;  // [c]
  Var weights;  // [S], value only
};

// score_i = v . tanh(W_a s + keys_i), weights = softmax(score),
// context = sum_i weights_i H_i. `keys` is U_a applied to every row of H,
// so callers can hoist it out of a decoding loop.
template <typename T>
AttentionOut attend(Graph<T>& g, Var s, Var H, Var keys, Var W_a, Var v);
template <typename T>
AttentionOut additive_attention(Graph<T>& g, Var s, Var H, Var W_a, Var U_a, Var v);

// -log softmax(logits)[target], max-shifted. IndexError on a bad target.
template <typename T>
Var softmax_xent(Graph<T>& g, Var logits, int target);

inline constexpr double kBernoulliEps = 1e-7;

// sum_t -[m_t ln p_t + (1 - m_t) ln(1 - p_t)] with p clamped to [eps, 1 - eps].
template <typename T>
Var bernoulli_nll(Graph<T>& g, Var p, std::span<const std::uint8_t> bits,
                  double eps = kBernoulliEps);

// Glorot-uniform bound for a [fan_out x fan_in] matrix.
double glorot_bound(std::size_t fan_in, std::size_t fan_out);

}  // namespace focusmix::numerics
