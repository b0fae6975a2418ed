/*
 * Copyright 2026 The Drawering Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "drawering/common.hpp"
#include "drawering/rng.hpp"
#include "drawering/tensor.hpp"

namespace drawering {

enum class layer_kind { linear, relu, sigmoid, dropout, embedding };

/// One layer in torch-like notation: Linear(in,out), ReLU, Sigmoid,
/// Dropout(p), Embedding(vocab,dim). Embedding layers may only appear as a
/// leading block; they look up index columns of the input and concatenate
/// the looked-up vectors with the remaining (passthrough) columns.
struct layer_spec {
  layer_kind kind = layer_kind::relu;
  int in = 0, out = 0;   // linear; in == -1 stands for "auto" until resolved
  double drop_p = 0.0;   // dropout
  int vocab = 0, dim = 0;  // embedding

  static layer_spec linear(int in, int out) {
    layer_spec s;
    s.kind = layer_kind::linear;
    s.in = in;
    s.out = out;
    return s;
  }
  static layer_spec relu() { return {}; }
  static layer_spec sigmoid() {
    layer_spec s;
    s.kind = layer_kind::sigmoid;
    return s;
  }
  static layer_spec dropout(double p) {
    layer_spec s;
    s.kind = layer_kind::dropout;
    s.drop_p = p;
    return s;
  }
  static layer_spec embedding(int vocab, int dim) {
    layer_spec s;
    s.kind = layer_kind::embedding;
    s.vocab = vocab;
    s.dim = dim;
    return s;
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_args(std::string_view body) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= body.size(); ++i) {
    if (i == body.size() || body[i] == ',') {
      out.push_back(trim(body.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

inline int parse_int_arg(std::string_view v, std::string_view ctx) {
  if (v == "auto") return -1;
  try {
    std::size_t pos = 0;
    const int n = std::stoi(std::string(v), &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing chars");
    return n;
  } catch (const std::exception&) {
    throw config_error("bad integer '" + std::string(v) + "' in " + std::string(ctx));
  }
}

}  // namespace detail

/// Parses one layer from its textual form, e.g. "Linear(75,64)" or "ReLU".
/// "Linear(auto,64)" leaves the input width to be resolved from the dataset.
inline layer_spec parse_layer_spec(std::string_view text) {
  const std::string_view t = detail::trim(text);
  if (t == "ReLU") return layer_spec::relu();
  if (t == "Sigmoid") return layer_spec::sigmoid();
  const auto open = t.find('(');
  if (open == std::string_view::npos || t.back() != ')') {
    throw config_error("cannot parse layer spec '" + std::string(text) + "'");
  }
  const std::string_view name = t.substr(0, open);
  const auto args = detail::split_args(t.substr(open + 1, t.size() - open - 2));
  if (name == "Linear") {
    if (args.size() != 2) throw config_error("Linear expects (in,out): '" + std::string(text) + "'");
    return layer_spec::linear(detail::parse_int_arg(args[0], text),
                              detail::parse_int_arg(args[1], text));
  }
  if (name == "Dropout") {
    if (args.size() != 1) throw config_error("Dropout expects (p): '" + std::string(text) + "'");
    double p = 0.0;
    try {
      p = std::stod(std::string(args[0]));
    } catch (const std::exception&) {
      throw config_error("bad dropout rate in '" + std::string(text) + "'");
    }
    return layer_spec::dropout(p);
  }
  if (name == "Embedding") {
    if (args.size() != 2) {
      throw config_error("Embedding expects (vocab,dim): '" + std::string(text) + "'");
    }
    return layer_spec::embedding(detail::parse_int_arg(args[0], text),
                                 detail::parse_int_arg(args[1], text));
  }
  throw config_error("unknown layer kind '" + std::string(name) + "'");
}

inline std::string to_string(const layer_spec& s) {
  switch (s.kind) {
    case layer_kind::linear:
      return "Linear(" + (s.in == -1 ? std::string("auto") : std::to_string(s.in)) + "," +
             std::to_string(s.out) + ")";
    case layer_kind::relu:
      return "ReLU";
    case layer_kind::sigmoid:
      return "Sigmoid";
    case layer_kind::dropout: {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "Dropout(%g)", s.drop_p);
      return buf;
    }
    case layer_kind::embedding:
      return "Embedding(" + std::to_string(s.vocab) + "," + std::to_string(s.dim) + ")";
  }
  return "?";
}

inline std::vector<layer_spec> parse_layer_list(const std::vector<std::string>& texts) {
  std::vector<layer_spec> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(parse_layer_spec(t));
  return out;
}

/// Weights plus bias for one parameterized layer. Embedding tables live in
/// `weights` (vocab x dim) with an empty bias.
struct param_group {
  tensor2 weights;
  std::vector<double> bias;
};

struct param_bank {
  std::vector<param_group> groups;

  std::size_t total_params() const {
    std::size_t n = 0;
    for (const auto& g : groups) n += g.weights.size() + g.bias.size();
    return n;
  }
};

/// Same shape as a param_bank; one gradient slot per parameter.
struct grad_bank {
  std::vector<param_group> groups;

  std::size_t total_params() const {
    std::size_t n = 0;
    for (const auto& g : groups) n += g.weights.size() + g.bias.size();
    return n;
  }
};

template <class BankA, class BankB>
void require_congruent(const BankA& a, const BankB& b, const char* what) {
  if (a.groups.size() != b.groups.size()) throw config_error(std::string(what) + ": group count differs");
  for (std::size_t i = 0; i < a.groups.size(); ++i) {
    if (!a.groups[i].weights.same_shape(b.groups[i].weights) ||
        a.groups[i].bias.size() != b.groups[i].bias.size()) {
      throw config_error(std::string(what) + ": shape mismatch in group " + std::to_string(i));
    }
  }
}

template <class Bank>
grad_bank zero_like(const Bank& src) {
  grad_bank out;
  out.groups.reserve(src.groups.size());
  for (const auto& g : src.groups) {
    param_group z;
    z.weights = tensor2(g.weights.rows, g.weights.cols);
    z.bias.assign(g.bias.size(), 0.0);
    out.groups.push_back(std::move(z));
  }
  return out;
}

inline double l1_norm(const grad_bank& bank) {
  double acc = 0.0;
  for (const auto& g : bank.groups) {
    for (double v : g.weights.data) acc += std::abs(v);
    for (double v : g.bias) acc += std::abs(v);
  }
  return acc;
}

inline void add_scaled(grad_bank& acc, double c, const grad_bank& g) {
  require_congruent(acc, g, "add_scaled");
  for (std::size_t i = 0; i < acc.groups.size(); ++i) {
    auto& dst = acc.groups[i];
    const auto& src = g.groups[i];
    for (std::size_t k = 0; k < dst.weights.data.size(); ++k) dst.weights.data[k] += c * src.weights.data[k];
    for (std::size_t k = 0; k < dst.bias.size(); ++k) dst.bias[k] += c * src.bias[k];
  }
}

/// a*A + b*B, elementwise over congruent banks.
inline grad_bank linear_comb(double a, const grad_bank& A, double b, const grad_bank& B) {
  require_congruent(A, B, "linear_comb");
  grad_bank out = zero_like(A);
  for (std::size_t i = 0; i < out.groups.size(); ++i) {
    auto& dst = out.groups[i];
    const auto& ga = A.groups[i];
    const auto& gb = B.groups[i];
    for (std::size_t k = 0; k < dst.weights.data.size(); ++k) {
      dst.weights.data[k] = a * ga.weights.data[k] + b * gb.weights.data[k];
    }
    for (std::size_t k = 0; k < dst.bias.size(); ++k) dst.bias[k] = a * ga.bias[k] + b * gb.bias[k];
  }
  return out;
}

enum class run_mode { train, eval };

/// Cached per-layer state from one forward pass; read-only during backward.
struct activation_tape {
  run_mode mode = run_mode::eval;
  int rows = 0;
  int output_dim = 0;
  // Per layer: linear/relu -> input; sigmoid -> output; dropout -> scaled
  // mask (empty in eval mode); embedding -> its index column.
  std::vector<tensor2> saved;
  // Present when the network has an embedding block: the passthrough slice
  // of the input, needed to rebuild the input gradient.
  tensor2 passthrough;
};

/// Layered dense model with named parameter stream. Rebuilding from the
/// same (spec, seed, stream id) yields bit-identical parameters.
struct network {
  std::vector<layer_spec> layers;
  param_bank params;
  std::uint64_t seed = 0;
  std::string stream_id;
  int input_dim = 0;
  int output_dim = 0;
  int embed_count = 0;       // leading embedding layers
  int embed_out = 0;         // total looked-up width
  int passthrough_cols = 0;  // input columns forwarded around the embeddings
  bool has_dropout = false;
  std::vector<int> group_of_layer;  // -1 for parameterless layers
  // Forward arithmetic counter (flops); used to assert evaluation-cost parity.
  mutable std::uint64_t forward_flops = 0;
};

inline std::size_t param_count(const std::vector<layer_spec>& specs) {
  std::size_t n = 0;
  for (const auto& s : specs) {
    if (s.kind == layer_kind::linear) n += static_cast<std::size_t>(s.in) * s.out + s.out;
    if (s.kind == layer_kind::embedding) n += static_cast<std::size_t>(s.vocab) * s.dim;
  }
  return n;
}

inline network build_network(const std::vector<layer_spec>& specs, std::uint64_t seed,
                             std::string_view stream_id = "") {
  if (specs.empty()) throw config_error("network spec is empty");

  network net;
  net.layers = specs;
  net.seed = seed;
  net.stream_id = std::string(stream_id);

  // Leading embedding block.
  std::size_t i = 0;
  while (i < specs.size() && specs[i].kind == layer_kind::embedding) {
    const auto& e = specs[i];
    if (e.vocab < 1 || e.dim < 1) throw config_error("Embedding dims must be positive");
    net.embed_out += e.dim;
    ++i;
  }
  net.embed_count = static_cast<int>(i);

  if (i == specs.size() || specs[i].kind != layer_kind::linear) {
    throw config_error("network must start with Linear (optionally preceded by Embedding layers)");
  }
  if (specs[i].kind == layer_kind::linear && specs[i].in == -1) {
    throw config_error("unresolved Linear(auto,...) input width");
  }
  if (net.embed_count > 0) {
    net.passthrough_cols = specs[i].in - net.embed_out;
    if (net.passthrough_cols < 0) {
      throw config_error("first Linear input " + std::to_string(specs[i].in) +
                         " is smaller than total embedding width " + std::to_string(net.embed_out));
    }
    net.input_dim = net.embed_count + net.passthrough_cols;
  } else {
    net.input_dim = specs[i].in;
  }

  int cur = specs[i].in;
  for (std::size_t l = i; l < specs.size(); ++l) {
    const auto& s = specs[l];
    switch (s.kind) {
      case layer_kind::linear:
        if (s.in < 1 || s.out < 1) throw config_error("Linear dims must be positive");
        if (s.in != cur) {
          throw config_error("dimension mismatch at layer " + std::to_string(l) + ": expected in=" +
                             std::to_string(cur) + ", spec says " + std::to_string(s.in));
        }
        cur = s.out;
        break;
      case layer_kind::relu:
      case layer_kind::sigmoid:
        break;
      case layer_kind::dropout:
        if (!(s.drop_p >= 0.0 && s.drop_p < 1.0)) throw config_error("Dropout p must be in [0,1)");
        net.has_dropout = true;
        break;
      case layer_kind::embedding:
        throw config_error("Embedding allowed only as an input-stage layer");
    }
  }
  net.output_dim = cur;

  // He-style uniform fan-in init; zero biases. Embeddings scale by their
  // own width so looked-up features land near unit scale.
  rng_stream rng = rng_stream::derived(seed, net.stream_id);
  net.group_of_layer.assign(specs.size(), -1);
  for (std::size_t l = 0; l < specs.size(); ++l) {
    const auto& s = specs[l];
    if (s.kind == layer_kind::linear) {
      param_group g;
      g.weights = tensor2(s.out, s.in);
      const double bound = std::sqrt(6.0 / s.in);
      for (auto& w : g.weights.data) w = rng.uniform(-bound, bound);
      g.bias.assign(s.out, 0.0);
      net.group_of_layer[l] = static_cast<int>(net.params.groups.size());
      net.params.groups.push_back(std::move(g));
    } else if (s.kind == layer_kind::embedding) {
      param_group g;
      g.weights = tensor2(s.vocab, s.dim);
      const double bound = std::sqrt(6.0 / s.dim);
      for (auto& w : g.weights.data) w = rng.uniform(-bound, bound);
      net.group_of_layer[l] = static_cast<int>(net.params.groups.size());
      net.params.groups.push_back(std::move(g));
    }
  }
  return net;
}

struct forward_pass {
  tensor2 output;
  activation_tape tape;
};

namespace detail {

inline void require_finite(const tensor2& t, const char* where) {
  if (!all_finite(t)) throw train_abort(std::string("non-finite activation in ") + where);
}

// Gathers the embedding block: index columns first, passthrough after.
inline tensor2 embed_forward(const network& net, const tensor2& batch, activation_tape* tape) {
  const int B = batch.rows;
  tensor2 enc(B, net.embed_out + net.passthrough_cols);
  int offset = 0;
  for (int e = 0; e < net.embed_count; ++e) {
    const auto& table = net.params.groups[net.group_of_layer[e]].weights;
    const int dim = table.cols;
    tensor2 idx_col(B, 1);
    for (int r = 0; r < B; ++r) {
      const double raw = batch(r, e);
      const auto idx = static_cast<long long>(raw);
      if (static_cast<double>(idx) != raw || idx < 0 || idx >= table.rows) {
        throw config_error("embedding index " + std::to_string(raw) + " out of range [0," +
                           std::to_string(table.rows) + ") in column " + std::to_string(e));
      }
      idx_col(r, 0) = raw;
      const double* src = table.row(static_cast<int>(idx));
      double* dst = enc.row(r) + offset;
      for (int d = 0; d < dim; ++d) dst[d] = src[d];
    }
    if (tape) tape->saved[e] = std::move(idx_col);
    offset += dim;
  }
  for (int r = 0; r < B; ++r) {
    const double* src = batch.row(r) + net.embed_count;
    double* dst = enc.row(r) + net.embed_out;
    for (int c = 0; c < net.passthrough_cols; ++c) dst[c] = src[c];
  }
  net.forward_flops += static_cast<std::uint64_t>(B) * (net.embed_out + net.passthrough_cols);
  return enc;
}

inline tensor2 run_forward(const network& net, const tensor2& batch, run_mode mode, rng_stream* rng,
                           activation_tape* tape) {
  if (batch.cols != net.input_dim) {
    throw config_error("forward: batch has " + std::to_string(batch.cols) + " columns, network expects " +
                       std::to_string(net.input_dim));
  }
  if (mode == run_mode::train && net.has_dropout && rng == nullptr) {
    throw config_error("forward: dropout in train mode needs an rng stream");
  }
  if (tape) {
    tape->mode = mode;
    tape->rows = batch.rows;
    tape->output_dim = net.output_dim;
    tape->saved.assign(net.layers.size(), tensor2{});
  }

  const int B = batch.rows;
  tensor2 cur;
  int first = net.embed_count;
  if (net.embed_count > 0) {
    cur = embed_forward(net, batch, tape);
    detail::require_finite(cur, "embedding block");
    if (tape) {
      tape->passthrough = tensor2(B, net.passthrough_cols);
      for (int r = 0; r < B; ++r) {
        for (int c = 0; c < net.passthrough_cols; ++c) tape->passthrough(r, c) = batch(r, net.embed_count + c);
      }
    }
  } else {
    cur = batch;
  }

  for (std::size_t l = first; l < net.layers.size(); ++l) {
    const auto& s = net.layers[l];
    switch (s.kind) {
      case layer_kind::linear: {
        const auto& g = net.params.groups[net.group_of_layer[l]];
        tensor2 out = matmul_nt(cur, g.weights);
        for (int r = 0; r < B; ++r) {
          double* row = out.row(r);
          for (int c = 0; c < s.out; ++c) row[c] += g.bias[c];
        }
        net.forward_flops += 2ull * B * s.in * s.out + static_cast<std::uint64_t>(B) * s.out;
        detail::require_finite(out, "Linear");
        if (tape) tape->saved[l] = std::move(cur);
        cur = std::move(out);
        break;
      }
      case layer_kind::relu: {
        net.forward_flops += cur.size();
        if (tape) {
          tensor2 out(cur.rows, cur.cols);
          for (std::size_t k = 0; k < cur.data.size(); ++k) out.data[k] = cur.data[k] > 0.0 ? cur.data[k] : 0.0;
          tape->saved[l] = std::move(cur);
          cur = std::move(out);
        } else {
          for (auto& v : cur.data) v = v > 0.0 ? v : 0.0;
        }
        break;
      }
      case layer_kind::sigmoid: {
        net.forward_flops += 4ull * cur.size();
        for (auto& v : cur.data) v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
        if (tape) tape->saved[l] = cur;  // backward needs the outputs
        break;
      }
      case layer_kind::dropout: {
        if (mode == run_mode::train) {
          // Inverted dropout: survivors are scaled by 1/(1-p) so eval is
          // the identity.
          const double keep_scale = 1.0 / (1.0 - s.drop_p);
          tensor2 mask(cur.rows, cur.cols);
          for (std::size_t k = 0; k < mask.data.size(); ++k) {
            mask.data[k] = rng->uniform() >= s.drop_p ? keep_scale : 0.0;
          }
          for (std::size_t k = 0; k < cur.data.size(); ++k) cur.data[k] *= mask.data[k];
          net.forward_flops += cur.size();
          if (tape) tape->saved[l] = std::move(mask);
        }
        break;
      }
      case layer_kind::embedding:
        throw config_error("embedding mid-stack");  // unreachable after build validation
    }
  }
  return cur;
}

}  // namespace detail

/// Runs the network on a batch, recording the activation tape needed by
/// backward(). In train mode dropout draws come from `rng` in layer order.
inline forward_pass forward(const network& net, const tensor2& batch, run_mode mode,
                            rng_stream* rng = nullptr) {
  forward_pass fp;
  fp.output = detail::run_forward(net, batch, mode, rng, &fp.tape);
  return fp;
}

/// Tape-free eval forward for scoring loops.
inline tensor2 predict(const network& net, const tensor2& batch) {
  return detail::run_forward(net, batch, run_mode::eval, nullptr, nullptr);
}

struct backward_pass {
  grad_bank bank;
  tensor2 input_grad;
};

/// Backpropagates `out_grad` through the tape, producing parameter
/// gradients and the gradient w.r.t. the batch input (which lets a head's
/// gradient chain into the shared core).
inline backward_pass backward(const network& net, const activation_tape& tape, const tensor2& out_grad) {
  if (tape.saved.size() != net.layers.size() || tape.rows == 0) {
    throw config_error("backward: tape does not belong to this network");
  }
  if (out_grad.rows != tape.rows || out_grad.cols != net.output_dim) {
    throw config_error("backward: out_grad is " + std::to_string(out_grad.rows) + "x" +
                       std::to_string(out_grad.cols) + ", expected " + std::to_string(tape.rows) + "x" +
                       std::to_string(net.output_dim));
  }

  backward_pass bp;
  bp.bank = zero_like(net.params);
  const int B = tape.rows;
  tensor2 cur = out_grad;

  for (int l = static_cast<int>(net.layers.size()) - 1; l >= net.embed_count; --l) {
    const auto& s = net.layers[l];
    switch (s.kind) {
      case layer_kind::linear: {
        const auto& x = tape.saved[l];
        if (x.rows != B || x.cols != s.in) throw config_error("backward: stale tape at Linear");
        auto& g = bp.bank.groups[net.group_of_layer[l]];
        g.weights = matmul_tn(cur, x);
        for (int r = 0; r < B; ++r) {
          const double* row = cur.row(r);
          for (int c = 0; c < s.out; ++c) g.bias[c] += row[c];
        }
        cur = matmul(cur, net.params.groups[net.group_of_layer[l]].weights);
        break;
      }
      case layer_kind::relu: {
        const auto& x = tape.saved[l];
        if (!x.same_shape(cur)) throw config_error("backward: stale tape at ReLU");
        for (std::size_t k = 0; k < cur.data.size(); ++k) {
          if (x.data[k] <= 0.0) cur.data[k] = 0.0;
        }
        break;
      }
      case layer_kind::sigmoid: {
        const auto& y = tape.saved[l];
        if (!y.same_shape(cur)) throw config_error("backward: stale tape at Sigmoid");
        for (std::size_t k = 0; k < cur.data.size(); ++k) {
          cur.data[k] *= y.data[k] * (1.0 - y.data[k]);
        }
        break;
      }
      case layer_kind::dropout: {
        if (tape.mode == run_mode::train) {
          const auto& mask = tape.saved[l];
          if (!mask.same_shape(cur)) throw config_error("backward: stale tape at Dropout");
          for (std::size_t k = 0; k < cur.data.size(); ++k) cur.data[k] *= mask.data[k];
        }
        break;
      }
      case layer_kind::embedding:
        break;  // handled below as a block
    }
  }

  if (net.embed_count == 0) {
    bp.input_grad = std::move(cur);
    return bp;
  }

  // Embedding block: scatter-add into the tables; index columns get zero
  // input gradient, passthrough columns get the trailing slice.
  bp.input_grad = tensor2(B, net.input_dim);
  int offset = 0;
  for (int e = 0; e < net.embed_count; ++e) {
    const auto& idx_col = tape.saved[e];
    if (idx_col.rows != B || idx_col.cols != 1) throw config_error("backward: stale tape at Embedding");
    auto& g = bp.bank.groups[net.group_of_layer[e]];
    const int dim = g.weights.cols;
    for (int r = 0; r < B; ++r) {
      const int idx = static_cast<int>(idx_col(r, 0));
      double* dst = g.weights.row(idx);
      const double* src = cur.row(r) + offset;
      for (int d = 0; d < dim; ++d) dst[d] += src[d];
    }
    offset += dim;
  }
  for (int r = 0; r < B; ++r) {
    const double* src = cur.row(r) + net.embed_out;
    double* dst = bp.input_grad.row(r) + net.embed_count;
    for (int c = 0; c < net.passthrough_cols; ++c) dst[c] = src[c];
  }
  return bp;
}

}  // namespace drawering
