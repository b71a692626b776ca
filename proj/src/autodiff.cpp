#include "sarkit/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>

#include "sarkit/errors.hpp"

namespace sarkit {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMatrix = Eigen::Map<RowMatrix>;
using ConstMapMatrix = Eigen::Map<const RowMatrix>;

ConstMapMatrix view(const Tensor& t) {
  return ConstMapMatrix(t.values().data(), static_cast<Eigen::Index>(t.rows()),
                        static_cast<Eigen::Index>(t.cols()));
}

ConstMapMatrix view(std::span<const double> data, std::size_t rows, std::size_t cols) {
  return ConstMapMatrix(data.data(), static_cast<Eigen::Index>(rows),
                        static_cast<Eigen::Index>(cols));
}

MapMatrix view(std::span<double> data, std::size_t rows, std::size_t cols) {
  return MapMatrix(data.data(), static_cast<Eigen::Index>(rows),
                   static_cast<Eigen::Index>(cols));
}

double sigmoid_scalar(double x) {
  x = std::clamp(x, -700.0, 700.0);
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void require_same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw ContractError("operands recorded on different tapes");
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) +
                         " vs " + to_string(b.shape()));
  }
}

bool is_row_broadcast(const Var& a, const Var& b) {
  return b.value().rows() == 1 && b.value().cols() == a.value().cols() &&
         a.value().rows() > 1;
}

template <typename Fn>
Var unary(const Var& x, Fn fn, std::function<double(double x, double y)> dfdx) {
  const Tensor& in = x.value();
  Tensor out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fn(in[i]);
  const std::size_t xi = x.id();
  return x.tape().record(std::move(out), {x}, [xi, dfdx](Tape& tape, std::size_t self) {
    auto g = tape.grad(self);
    auto dx = tape.grad_buffer(xi);
    if (dx.empty()) return;
    const Tensor& xv = tape.value(xi);
    const Tensor& yv = tape.value(self);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * dfdx(xv[i], yv[i]);
  });
}

}  // namespace

// ---- Parameter / Var / Tape ------------------------------------------------

Parameter::Parameter(std::string name_, Tensor value_, bool trainable_)
    : name(std::move(name_)),
      value(std::move(value_)),
      grad(value.shape()),
      trainable(trainable_) {}

void Parameter::zero_grad() {
  if (grad.shape() != value.shape()) grad = Tensor(value.shape());
  grad.fill(0.0);
}

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::push(Node node) {
  if (consumed_) throw StateError("tape already ran backward; record a new forward pass");
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::parameter(Parameter& param) {
  if (auto it = parameter_leaves_.find(&param); it != parameter_leaves_.end()) {
    return Var(this, it->second);
  }
  Node n;
  n.value = param.value;
  n.requires_grad = param.trainable;
  n.parameter = param.trainable ? &param : nullptr;
  Var v = push(std::move(n));
  parameter_leaves_.emplace(&param, v.id());
  return v;
}

Var Tape::record(Tensor value, std::span<const Var> inputs, Backward backward) {
  Node n;
  n.value = std::move(value);
  for (const Var& in : inputs) {
    if (&in.tape() != this) throw ContractError("operand recorded on a different tape");
    n.requires_grad = n.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

Var Tape::record_source(Tensor value, bool requires_grad, Backward backward) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

std::span<double> Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return {};
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

Tensor Tape::grad_of(const Var& v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.empty()) return Tensor(n.value.shape());
  return Tensor(n.value.shape(), n.grad);
}

void Tape::backward(const Var& loss) {
  if (&loss.tape() != this) throw ContractError("loss was recorded on a different tape");
  if (consumed_) throw StateError("backward already ran on this tape");
  if (loss.value().size() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " + to_string(loss.shape()));
  }
  consumed_ = true;
  if (!nodes_[loss.id()].requires_grad) return;
  grad_buffer(loss.id())[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, i);
    if (n.parameter != nullptr) {
      Parameter& p = *n.parameter;
      if (p.grad.shape() != p.value.shape()) p.zero_grad();
      for (std::size_t k = 0; k < n.grad.size(); ++k) p.grad[k] += n.grad[k];
    }
  }
}

// ---- ops -------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  require_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows()) {
    throw DimensionError("matmul: cannot multiply " + to_string(av.shape()) + " by " +
                         to_string(bv.shape()));
  }
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor out({m, n});
  view(out.values(), m, n).noalias() = view(av) * view(bv);
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().record(std::move(out), {a, b}, [ai, bi, m, k, n](Tape& tape, std::size_t self) {
    auto g = view(tape.grad(self), m, n);
    if (auto da = tape.grad_buffer(ai); !da.empty()) {
      view(da, m, k).noalias() += g * view(tape.value(bi)).transpose();
    }
    if (auto db = tape.grad_buffer(bi); !db.empty()) {
      view(db, k, n).noalias() += view(tape.value(ai)).transpose() * g;
    }
  });
}

namespace {

Var linear_impl(const Var& x, const Var& w, const Var* bias) {
  require_same_tape(x, w);
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (wv.rank() != 2 || xv.cols() != wv.cols()) {
    throw DimensionError("linear: input " + to_string(xv.shape()) +
                         " incompatible with weights " + to_string(wv.shape()));
  }
  const std::size_t n = xv.rows(), in = xv.cols(), out_dim = wv.rows();
  if (bias != nullptr && bias->value().size() != out_dim) {
    throw DimensionError("linear: bias " + to_string(bias->shape()) + " does not match " +
                         std::to_string(out_dim) + " outputs");
  }
  Tensor out({n, out_dim});
  auto y = view(out.values(), n, out_dim);
  y.noalias() = view(xv) * view(wv).transpose();
  if (bias != nullptr) {
    auto b = view(bias->value().values(), 1, out_dim);
    y.rowwise() += b.row(0);
  }
  const std::size_t xi = x.id(), wi = w.id();
  const std::size_t bi = bias != nullptr ? bias->id() : SIZE_MAX;
  std::vector<Var> inputs{x, w};
  if (bias != nullptr) inputs.push_back(*bias);
  return x.tape().record(std::move(out), inputs,
                         [xi, wi, bi, n, in, out_dim](Tape& tape, std::size_t self) {
                           auto g = view(tape.grad(self), n, out_dim);
                           if (auto dx = tape.grad_buffer(xi); !dx.empty()) {
                             view(dx, n, in).noalias() += g * view(tape.value(wi));
                           }
                           if (auto dw = tape.grad_buffer(wi); !dw.empty()) {
                             view(dw, out_dim, in).noalias() +=
                                 g.transpose() * view(tape.value(xi));
                           }
                           if (bi != SIZE_MAX) {
                             if (auto db = tape.grad_buffer(bi); !db.empty()) {
                               view(db, 1, out_dim) += g.colwise().sum();
                             }
                           }
                         });
}

enum class Arith { add, sub, mul };

Var arith(const Var& a, const Var& b, Arith kind, const char* name) {
  require_same_tape(a, b);
  const bool broadcast = a.shape() != b.shape() && is_row_broadcast(a, b);
  if (!broadcast) require_same_shape(a, b, name);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t cols = av.cols();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double bx = broadcast ? bv[i % cols] : bv[i];
    switch (kind) {
      case Arith::add: out[i] = av[i] + bx; break;
      case Arith::sub: out[i] = av[i] - bx; break;
      case Arith::mul: out[i] = av[i] * bx; break;
    }
  }
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().record(std::move(out), {a, b},
                         [ai, bi, kind, broadcast, cols](Tape& tape, std::size_t self) {
                           auto g = tape.grad(self);
                           const Tensor& av = tape.value(ai);
                           const Tensor& bv = tape.value(bi);
                           if (auto da = tape.grad_buffer(ai); !da.empty()) {
                             for (std::size_t i = 0; i < g.size(); ++i) {
                               const double bx = broadcast ? bv[i % cols] : bv[i];
                               da[i] += kind == Arith::mul ? g[i] * bx : g[i];
                             }
                           }
                           if (auto db = tape.grad_buffer(bi); !db.empty()) {
                             for (std::size_t i = 0; i < g.size(); ++i) {
                               const std::size_t j = broadcast ? i % cols : i;
                               switch (kind) {
                                 case Arith::add: db[j] += g[i]; break;
                                 case Arith::sub: db[j] -= g[i]; break;
                                 case Arith::mul: db[j] += g[i] * av[i]; break;
                               }
                             }
                           }
                         });
}

}  // namespace

Var linear(const Var& x, const Var& w) { return linear_impl(x, w, nullptr); }
Var linear(const Var& x, const Var& w, const Var& bias) { return linear_impl(x, w, &bias); }

Var add(const Var& a, const Var& b) { return arith(a, b, Arith::add, "add"); }
Var sub(const Var& a, const Var& b) { return arith(a, b, Arith::sub, "sub"); }
Var mul(const Var& a, const Var& b) { return arith(a, b, Arith::mul, "mul"); }

Var scale(const Var& a, double factor) {
  return unary(a, [factor](double x) { return factor * x; },
               [factor](double, double) { return factor; });
}

Var sigmoid(const Var& x) {
  return unary(x, sigmoid_scalar, [](double, double y) { return y * (1.0 - y); });
}

Var tanh(const Var& x) {
  return unary(x, [](double v) { return std::tanh(v); },
               [](double, double y) { return 1.0 - y * y; });
}

Var relu(const Var& x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var log(const Var& x) {
  return unary(x, [](double v) { return std::log(v); },
               [](double v, double) { return 1.0 / v; });
}

Var softmax(const Var& x) {
  const Tensor& in = x.value();
  const std::size_t rows = in.rows(), cols = in.cols();
  if (cols == 0) throw DimensionError("softmax: last axis is empty");
  Tensor out(in.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = &in.values()[r * cols];
    double* dst = &out.values()[r * cols];
    const double mx = *std::max_element(src, src + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += (dst[c] = std::exp(src[c] - mx));
    for (std::size_t c = 0; c < cols; ++c) dst[c] /= z;
  }
  const std::size_t xi = x.id();
  return x.tape().record(std::move(out), {x}, [xi, rows, cols](Tape& tape, std::size_t self) {
    auto dx = tape.grad_buffer(xi);
    if (dx.empty()) return;
    auto g = tape.grad(self);
    const Tensor& s = tape.value(self);
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * s[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) {
        dx[r * cols + c] += s[r * cols + c] * (g[r * cols + c] - dot);
      }
    }
  });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no operands");
  std::vector<Var> used;
  for (const Var& p : parts) {
    if (p.value().size() != 0) used.push_back(p);
  }
  if (used.empty()) used.push_back(parts.front());
  const Shape& first = used.front().shape();
  if (axis >= first.size()) {
    throw DimensionError("concat: axis " + std::to_string(axis) + " out of range for " +
                         to_string(first));
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Var& p : used) {
    require_same_tape(used.front(), p);
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
    if (!ok) {
      throw DimensionError("concat: incompatible extents " + to_string(first) + " and " +
                           to_string(s) + " along axis " + std::to_string(axis));
    }
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];

  Tensor out(out_shape);
  const std::size_t out_block = out_shape[axis] * inner;
  std::vector<std::size_t> ids, blocks, offsets;
  std::size_t offset = 0;
  for (const Var& p : used) {
    const std::size_t block = p.shape()[axis] * inner;
    const auto src = p.value().values();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src.begin() + o * block, block, out.values().begin() + o * out_block + offset);
    }
    ids.push_back(p.id());
    blocks.push_back(block);
    offsets.push_back(offset);
    offset += block;
  }
  return used.front().tape().record(
      std::move(out), used,
      [ids, blocks, offsets, outer, out_block](Tape& tape, std::size_t self) {
        auto g = tape.grad(self);
        for (std::size_t k = 0; k < ids.size(); ++k) {
          auto dp = tape.grad_buffer(ids[k]);
          if (dp.empty()) continue;
          for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t j = 0; j < blocks[k]; ++j) {
              dp[o * blocks[k] + j] += g[o * out_block + offsets[k] + j];
            }
          }
        }
      });
}

Var concat(const Var& a, const Var& b, std::size_t axis) {
  const Var parts[] = {a, b};
  return concat(parts, axis);
}

Var slice_rows(const Var& x, std::size_t begin, std::size_t count) {
  const Tensor& in = x.value();
  const std::size_t cols = in.cols();
  if (begin + count > in.rows()) {
    throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside " + to_string(in.shape()));
  }
  Tensor out({count, cols});
  std::copy_n(in.values().begin() + begin * cols, count * cols, out.values().begin());
  const std::size_t xi = x.id();
  return x.tape().record(std::move(out), {x}, [xi, begin, cols](Tape& tape, std::size_t self) {
    auto dx = tape.grad_buffer(xi);
    if (dx.empty()) return;
    auto g = tape.grad(self);
    for (std::size_t i = 0; i < g.size(); ++i) dx[begin * cols + i] += g[i];
  });
}

Var slice_cols(const Var& x, std::size_t begin, std::size_t count) {
  const Tensor& in = x.value();
  const std::size_t rows = in.rows(), cols = in.cols();
  if (begin + count > cols) {
    throw DimensionError("slice_cols: columns [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside " + to_string(in.shape()));
  }
  Tensor out({rows, count});
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(in.values().begin() + r * cols + begin, count, out.values().begin() + r * count);
  }
  const std::size_t xi = x.id();
  return x.tape().record(std::move(out), {x},
                         [xi, begin, rows, cols, count](Tape& tape, std::size_t self) {
                           auto dx = tape.grad_buffer(xi);
                           if (dx.empty()) return;
                           auto g = tape.grad(self);
                           for (std::size_t r = 0; r < rows; ++r) {
                             for (std::size_t c = 0; c < count; ++c) {
                               dx[r * cols + begin + c] += g[r * count + c];
                             }
                           }
                         });
}

Var sum(const Var& x) {
  double total = 0.0;
  for (double v : x.value().values()) total += v;
  const std::size_t xi = x.id();
  return x.tape().record(Tensor::scalar(total), {x}, [xi](Tape& tape, std::size_t self) {
    auto dx = tape.grad_buffer(xi);
    const double g = tape.grad(self)[0];
    for (double& d : dx) d += g;
  });
}

Var dropout(const Var& x, double rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (mode == Mode::eval || rate == 0.0) return x;
  const Tensor& in = x.value();
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(in.size());
  Tensor out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) {
    mask[i] = rng.uniform() < rate ? 0.0 : keep_scale;
    out[i] = in[i] * mask[i];
  }
  const std::size_t xi = x.id();
  return x.tape().record(std::move(out), {x},
                         [xi, mask = std::move(mask)](Tape& tape, std::size_t self) {
                           auto dx = tape.grad_buffer(xi);
                           if (dx.empty()) return;
                           auto g = tape.grad(self);
                           for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * mask[i];
                         });
}

Var grad_reverse(const Var& x, double lambda) {
  const std::size_t xi = x.id();
  const double factor = -lambda;
  return x.tape().record(x.value(), {x}, [xi, factor](Tape& tape, std::size_t self) {
    auto dx = tape.grad_buffer(xi);
    if (dx.empty()) return;
    auto g = tape.grad(self);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += factor * g[i];
  });
}

Var lookup(Tape& tape, Parameter& table, std::span<const int> indices) {
  const Tensor& tv = table.value;
  if (tv.rank() != 2) throw DimensionError("lookup: table must be a matrix");
  const std::size_t dim = tv.cols();
  const std::size_t vocab = tv.rows();
  Tensor out({indices.size(), dim});
  std::vector<int> idx(indices.begin(), indices.end());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || static_cast<std::size_t>(idx[r]) >= vocab) {
      throw ContractError("lookup: index " + std::to_string(idx[r]) + " outside vocabulary of " +
                          std::to_string(vocab));
    }
    std::copy_n(tv.values().begin() + static_cast<std::size_t>(idx[r]) * dim, dim,
                out.values().begin() + r * dim);
  }
  Parameter* target = &table;
  return tape.record_source(
      std::move(out), table.trainable,
      [target, idx = std::move(idx), dim](Tape& t, std::size_t self) {
        if (target->grad.shape() != target->value.shape()) target->zero_grad();
        auto g = t.grad(self);
        for (std::size_t r = 0; r < idx.size(); ++r) {
          double* row = &target->grad.values()[static_cast<std::size_t>(idx[r]) * dim];
          for (std::size_t c = 0; c < dim; ++c) row[c] += g[r * dim + c];
        }
      });
}

Var lstm_cell(const Var& gates, const Var& cell) {
  require_same_tape(gates, cell);
  const std::size_t hidden = cell.value().size();
  if (gates.value().size() != 4 * hidden) {
    throw DimensionError("lstm_cell: gates " + to_string(gates.shape()) +
                         " do not match cell " + to_string(cell.shape()));
  }
  const auto a = gates.value().values();
  const auto c = cell.value().values();
  // Activated gates, saved for the backward pass: i, f, g, o, tanh(c').
  std::vector<double> act(5 * hidden);
  Tensor out({1, 2 * hidden});
  for (std::size_t j = 0; j < hidden; ++j) {
    const double i = sigmoid_scalar(a[j]);
    const double f = sigmoid_scalar(a[hidden + j]);
    const double g = std::tanh(a[2 * hidden + j]);
    const double o = sigmoid_scalar(a[3 * hidden + j]);
    const double c_next = f * c[j] + i * g;
    const double tc = std::tanh(c_next);
    act[j] = i;
    act[hidden + j] = f;
    act[2 * hidden + j] = g;
    act[3 * hidden + j] = o;
    act[4 * hidden + j] = tc;
    out[j] = o * tc;
    out[hidden + j] = c_next;
  }
  const std::size_t gi = gates.id(), ci = cell.id();
  return gates.tape().record(
      std::move(out), {gates, cell},
      [gi, ci, hidden, act = std::move(act)](Tape& tape, std::size_t self) {
        auto up = tape.grad(self);
        auto da = tape.grad_buffer(gi);
        auto dc = tape.grad_buffer(ci);
        const auto c = tape.value(ci).values();
        for (std::size_t j = 0; j < hidden; ++j) {
          const double i = act[j], f = act[hidden + j], g = act[2 * hidden + j];
          const double o = act[3 * hidden + j], tc = act[4 * hidden + j];
          const double dh = up[j];
          const double dc_next = up[hidden + j] + dh * o * (1.0 - tc * tc);
          if (!da.empty()) {
            da[j] += dc_next * g * i * (1.0 - i);
            da[hidden + j] += dc_next * c[j] * f * (1.0 - f);
            da[2 * hidden + j] += dc_next * i * (1.0 - g * g);
            da[3 * hidden + j] += dh * tc * o * (1.0 - o);
          }
          if (!dc.empty()) dc[j] += dc_next * f;
        }
      });
}

Var lstm_sequence(const Var& projected, const Var& hidden_weights, bool reverse) {
  require_same_tape(projected, hidden_weights);
  const Tensor& pv = projected.value();
  const Tensor& wv = hidden_weights.value();
  const std::size_t hidden = wv.cols();
  const std::size_t m = pv.rows();
  if (wv.rank() != 2 || wv.rows() != 4 * hidden || pv.cols() != 4 * hidden || m == 0) {
    throw DimensionError("lstm_sequence: projections " + to_string(pv.shape()) +
                         " incompatible with recurrent weights " + to_string(wv.shape()));
  }
  const std::size_t h4 = 4 * hidden;
  // Per processing step: activated gates (i, f, g, o), cell state and tanh of
  // it, and the hidden state that fed the step.
  auto act = std::make_shared<std::vector<double>>(m * h4);
  auto cells = std::make_shared<std::vector<double>>(m * hidden);
  auto tanh_cells = std::make_shared<std::vector<double>>(m * hidden);
  auto h_prev = std::make_shared<std::vector<double>>(m * hidden, 0.0);
  Tensor out({m, hidden});
  Eigen::VectorXd h = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(hidden));
  Eigen::VectorXd pre(static_cast<Eigen::Index>(h4));
  const auto W = view(wv);
  for (std::size_t s = 0; s < m; ++s) {
    const std::size_t t = reverse ? m - 1 - s : s;
    std::copy(h.data(), h.data() + hidden, h_prev->begin() + static_cast<std::ptrdiff_t>(s * hidden));
    pre.noalias() = W * h;
    const double* p = &pv.values()[t * h4];
    double* a = &(*act)[s * h4];
    for (std::size_t j = 0; j < hidden; ++j) {
      const double i = sigmoid_scalar(p[j] + pre[static_cast<Eigen::Index>(j)]);
      const double f = sigmoid_scalar(p[hidden + j] + pre[static_cast<Eigen::Index>(hidden + j)]);
      const double g = std::tanh(p[2 * hidden + j] + pre[static_cast<Eigen::Index>(2 * hidden + j)]);
      const double o = sigmoid_scalar(p[3 * hidden + j] + pre[static_cast<Eigen::Index>(3 * hidden + j)]);
      const double c_prev = s == 0 ? 0.0 : (*cells)[(s - 1) * hidden + j];
      const double c = f * c_prev + i * g;
      const double tc = std::tanh(c);
      a[j] = i;
      a[hidden + j] = f;
      a[2 * hidden + j] = g;
      a[3 * hidden + j] = o;
      (*cells)[s * hidden + j] = c;
      (*tanh_cells)[s * hidden + j] = tc;
      h[static_cast<Eigen::Index>(j)] = o * tc;
      out[t * hidden + j] = o * tc;
    }
  }
  const std::size_t pi = projected.id(), wi = hidden_weights.id();
  return projected.tape().record(
      std::move(out), {projected, hidden_weights},
      [pi, wi, m, hidden, h4, reverse, act, cells, tanh_cells, h_prev](Tape& tape, std::size_t self) {
        const auto up = tape.grad(self);
        const auto W = view(tape.value(wi));
        // Pre-activation gradients per processing step.
        RowMatrix dA(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(h4));
        Eigen::VectorXd dh_next = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(hidden));
        std::vector<double> dc_next(hidden, 0.0);
        for (std::size_t k = m; k-- > 0;) {
          const std::size_t t = reverse ? m - 1 - k : k;
          const double* a = &(*act)[k * h4];
          double* d = dA.row(static_cast<Eigen::Index>(k)).data();
          for (std::size_t j = 0; j < hidden; ++j) {
            const double i = a[j], f = a[hidden + j], g = a[2 * hidden + j], o = a[3 * hidden + j];
            const double tc = (*tanh_cells)[k * hidden + j];
            const double c_prev = k == 0 ? 0.0 : (*cells)[(k - 1) * hidden + j];
            const double dh = up[t * hidden + j] + dh_next[static_cast<Eigen::Index>(j)];
            const double dc = dh * o * (1.0 - tc * tc) + dc_next[j];
            d[j] = dc * g * i * (1.0 - i);
            d[hidden + j] = dc * c_prev * f * (1.0 - f);
            d[2 * hidden + j] = dc * i * (1.0 - g * g);
            d[3 * hidden + j] = dh * tc * o * (1.0 - o);
            dc_next[j] = dc * f;
          }
          dh_next.noalias() = W.transpose() * dA.row(static_cast<Eigen::Index>(k)).transpose();
        }
        if (auto dp = tape.grad_buffer(pi); !dp.empty()) {
          auto DP = view(dp, m, h4);
          for (std::size_t k = 0; k < m; ++k) {
            const std::size_t t = reverse ? m - 1 - k : k;
            DP.row(static_cast<Eigen::Index>(t)) += dA.row(static_cast<Eigen::Index>(k));
          }
        }
        if (auto dw = tape.grad_buffer(wi); !dw.empty()) {
          view(dw, h4, hidden).noalias() += dA.transpose() * view(std::span<const double>(*h_prev), m, hidden);
        }
      });
}

// ---- verification ------------------------------------------------------------

namespace {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / denom;
}

double scalar_value(const Var& v) {
  if (v.value().size() != 1) {
    throw ContractError("finite_diff_check: function must return a scalar, got " +
                        to_string(v.shape()));
  }
  return v.value()[0];
}

}  // namespace

double finite_diff_check(const TensorFunction& f, const Tensor& x, double eps) {
  Tensor analytic;
  {
    Tape tape;
    Var xv = tape.variable(x);
    Var y = f(tape, xv);
    scalar_value(y);
    tape.backward(y);
    analytic = tape.grad_of(xv);
  }
  double worst = 0.0;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    Tape plus;
    const double fp = scalar_value(f(plus, plus.constant(probe)));
    probe[i] = orig - eps;
    Tape minus;
    const double fm = scalar_value(f(minus, minus.constant(probe)));
    probe[i] = orig;
    worst = std::max(worst, relative_error(analytic[i], (fp - fm) / (2.0 * eps)));
  }
  return worst;
}

double finite_diff_check(const ParameterFunction& f, std::span<Parameter* const> params,
                         double eps, std::size_t stride) {
  if (stride == 0) stride = 1;
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    Var y = f(tape);
    scalar_value(y);
    tape.backward(y);
  }
  auto evaluate = [&f]() {
    Tape tape;
    return scalar_value(f(tape));
  };
  double worst = 0.0;
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    for (std::size_t i = 0; i < p->value.size(); i += stride) {
      const double orig = p->value[i];
      if (!std::isfinite(orig)) continue;
      p->value[i] = orig + eps;
      const double fp = evaluate();
      p->value[i] = orig - eps;
      const double fm = evaluate();
      p->value[i] = orig;
      worst = std::max(worst, relative_error(p->grad[i], (fp - fm) / (2.0 * eps)));
    }
  }
  return worst;
}

}  // namespace sarkit
