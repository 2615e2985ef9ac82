#include "vocnet/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "vocnet/kernels.hpp"

namespace vocnet {

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::watch(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, nullptr, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Parameter& p) {
  nodes_.push_back(Node{p.value, {}, {}, {}, &p, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, Backward backward) {
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [&](std::size_t i) { return nodes_.at(i).requires_grad; });
  nodes_.push_back(Node{std::move(value), {}, std::move(inputs),
                        needs ? std::move(backward) : Backward{}, nullptr, needs});
  return Var(this, nodes_.size() - 1);
}

Tensor Tape::grad(std::size_t id) const {
  const Node& node = nodes_.at(id);
  if (node.grad.empty()) return Tensor(node.value.shape());
  return node.grad;
}

void Tape::accumulate(std::size_t id, const Tensor& g) {
  Node& node = nodes_.at(id);
  if (!node.requires_grad) return;
  if (g.size() != node.value.size()) {
    throw DimensionError("gradient " + shape_string(g.shape()) +
                         " does not match node value " + shape_string(node.value.shape()));
  }
  if (node.grad.empty()) {
    node.grad = Tensor(node.value.shape(), g.array());
  } else {
    node.grad.array() += g.array();
  }
}

void Tape::backward(const Var& loss) {
  if (loss.tape_ != this) throw ContractViolation("backward: loss belongs to another tape");
  if (value(loss.id()).size() != 1) {
    throw ContractViolation("backward: loss must be scalar, got shape " +
                            shape_string(value(loss.id()).shape()));
  }
  for (Node& node : nodes_) node.grad = Tensor();
  accumulate(loss.id(), Tensor::constant(value(loss.id()).shape(), 1.0));
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& node = nodes_[i];
    if (node.grad.empty()) continue;
    if (node.backward) node.backward(*this, i);
    if (node.parameter != nullptr) {
      Parameter& p = *node.parameter;
      if (p.grad.size() != p.value.size()) p.zero_grad();
      p.grad.array() += nodes_[i].grad.array();
    }
  }
}

namespace ad {
namespace {

void require_same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw ContractViolation("operands recorded on different tapes");
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
  }
}

}  // namespace

Var conv1d(const Var& input, const Var& kernels, const Var& bias, Index stride,
           Index padding) {
  require_same_tape(input, kernels);
  Tape& tape = input.tape();
  Tensor out = vocnet::conv1d(input.value(), kernels.value(), bias.value(), stride, padding);
  const std::size_t x = input.id(), w = kernels.id(), b = bias.id();
  return tape.record(std::move(out), {x, w, b},
                     [x, w, b, stride, padding](Tape& t, std::size_t self) {
                       auto g = conv1d_backward(t.value(x), t.value(w), t.grad(self),
                                                stride, padding);
                       t.accumulate(x, g.input);
                       t.accumulate(w, g.kernels);
                       if (t.value(b).size() != 0) t.accumulate(b, g.bias);
                     });
}

Var conv1d_transpose(const Var& input, const Var& kernels, const Var& bias,
                     Index stride, Index padding) {
  require_same_tape(input, kernels);
  Tape& tape = input.tape();
  Tensor out = vocnet::conv1d_transpose(input.value(), kernels.value(), bias.value(),
                                        stride, padding);
  const std::size_t x = input.id(), w = kernels.id(), b = bias.id();
  return tape.record(std::move(out), {x, w, b},
                     [x, w, b, stride, padding](Tape& t, std::size_t self) {
                       auto g = conv1d_transpose_backward(t.value(x), t.value(w),
                                                          t.grad(self), stride, padding);
                       t.accumulate(x, g.input);
                       t.accumulate(w, g.kernels);
                       if (t.value(b).size() != 0) t.accumulate(b, g.bias);
                     });
}

Var avg_pool1d(const Var& input, Index window) {
  Tape& tape = input.tape();
  const std::size_t x = input.id();
  return tape.record(vocnet::avg_pool1d(input.value(), window), {x},
                     [x, window](Tape& t, std::size_t self) {
                       t.accumulate(x, avg_pool1d_backward(t.value(x).shape(),
                                                           t.grad(self), window));
                     });
}

Var linear(const Var& input, const Var& weight, const Var& bias) {
  require_same_tape(input, weight);
  Tape& tape = input.tape();
  const std::size_t x = input.id(), w = weight.id(), b = bias.id();
  return tape.record(
      vocnet::linear(input.value(), weight.value(), bias.value()), {x, w, b},
      [x, w, b](Tape& t, std::size_t self) {
        const Tensor& xv = t.value(x);
        const Tensor& wv = t.value(w);
        const Tensor dy = t.grad(self);
        const Index rows = xv.rank() == 2 ? xv.dim(0) : 1;
        const Index in = wv.dim(1), out = wv.dim(0);
        const auto dym = dy.matrix(rows, out);
        if (t.requires_grad(x)) {
          Tensor dx(xv.shape());
          dx.matrix(rows, in).noalias() = dym * wv.matrix();
          t.accumulate(x, dx);
        }
        Tensor dw(wv.shape());
        dw.matrix().noalias() = dym.transpose() * xv.matrix(rows, in);
        t.accumulate(w, dw);
        if (t.value(b).size() != 0) {
          Tensor db({out});
          db.array() = dym.colwise().sum().transpose().array();
          t.accumulate(b, db);
        }
      });
}

Var relu(const Var& x) {
  Tensor out(x.shape(), x.value().array().max(0.0));
  const std::size_t in = x.id();
  return x.tape().record(std::move(out), {in}, [in](Tape& t, std::size_t self) {
    Tensor g = t.grad(self);
    g.array() = (t.value(in).array() > 0.0).select(g.array(), 0.0);
    t.accumulate(in, g);
  });
}

Var exp(const Var& x) {
  Tensor out(x.shape(), x.value().array().exp());
  const std::size_t in = x.id();
  return x.tape().record(std::move(out), {in}, [in](Tape& t, std::size_t self) {
    Tensor g = t.grad(self);
    g.array() *= t.value(self).array();
    t.accumulate(in, g);
  });
}

Var softmax(const Var& x) {
  const std::size_t in = x.id();
  return x.tape().record(vocnet::softmax(x.value()), {in}, [in](Tape& t, std::size_t self) {
    const Tensor& y = t.value(self);
    const Index cols = y.dim(y.rank() - 1);
    const Index rows = y.size() / cols;
    Tensor g = t.grad(self);
    auto gm = g.matrix(rows, cols);
    const auto ym = y.matrix(rows, cols);
    for (Index r = 0; r < rows; ++r) {
      const double dot = gm.row(r).dot(ym.row(r));
      gm.row(r) = (ym.row(r).array() * (gm.row(r).array() - dot)).matrix();
    }
    t.accumulate(in, g);
  });
}

Var dropout(const Var& x, double p, std::mt19937_64& rng, bool training) {
  if (p < 0.0 || p >= 1.0) throw DomainError("dropout: p must lie in [0, 1)");
  if (!training || p == 0.0) return x;
  Tensor::Array mask(x.value().size());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - p);
  for (Index i = 0; i < mask.size(); ++i) mask[i] = unit(rng) < p ? 0.0 : keep_scale;
  Tensor out(x.shape(), x.value().array() * mask);
  const std::size_t in = x.id();
  return x.tape().record(std::move(out), {in},
                         [in, mask = std::move(mask)](Tape& t, std::size_t self) {
                           Tensor g = t.grad(self);
                           g.array() *= mask;
                           t.accumulate(in, g);
                         });
}

Var reshape(const Var& x, Shape shape) {
  const std::size_t in = x.id();
  return x.tape().record(x.value().reshaped(std::move(shape)), {in},
                         [in](Tape& t, std::size_t self) {
                           t.accumulate(in, t.grad(self).reshaped(t.value(in).shape()));
                         });
}

Var concat(const Var& a, const Var& b) {
  require_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != bv.rank() || av.rank() < 1 || av.rank() > 3) {
    throw DimensionError("concat: ranks differ or unsupported: " + shape_string(av.shape()) +
                         " and " + shape_string(bv.shape()));
  }
  Shape shape = av.shape();
  Index batch = 1;
  if (av.rank() == 1) {
    shape[0] += bv.dim(0);
  } else {
    if (av.dim(0) != bv.dim(0) || (av.rank() == 3 && av.dim(2) != bv.dim(2))) {
      throw DimensionError("concat: incompatible shapes " + shape_string(av.shape()) +
                           " and " + shape_string(bv.shape()));
    }
    batch = av.dim(0);
    shape[1] += bv.dim(1);
  }
  const Index ablock = av.size() / batch;
  const Index bblock = bv.size() / batch;
  Tensor out(shape);
  for (Index n = 0; n < batch; ++n) {
    out.array().segment(n * (ablock + bblock), ablock) = av.array().segment(n * ablock, ablock);
    out.array().segment(n * (ablock + bblock) + ablock, bblock) =
        bv.array().segment(n * bblock, bblock);
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib},
                         [ia, ib, batch, ablock, bblock](Tape& t, std::size_t self) {
                           const Tensor g = t.grad(self);
                           Tensor ga(t.value(ia).shape());
                           Tensor gb(t.value(ib).shape());
                           for (Index n = 0; n < batch; ++n) {
                             const Index base = n * (ablock + bblock);
                             ga.array().segment(n * ablock, ablock) =
                                 g.array().segment(base, ablock);
                             gb.array().segment(n * bblock, bblock) =
                                 g.array().segment(base + ablock, bblock);
                           }
                           t.accumulate(ia, ga);
                           t.accumulate(ib, gb);
                         });
}

Var add(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "add");
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(Tensor(a.shape(), a.value().array() + b.value().array()), {ia, ib},
                         [ia, ib](Tape& t, std::size_t self) {
                           const Tensor g = t.grad(self);
                           t.accumulate(ia, g);
                           t.accumulate(ib, g);
                         });
}

Var sub(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "sub");
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(Tensor(a.shape(), a.value().array() - b.value().array()), {ia, ib},
                         [ia, ib](Tape& t, std::size_t self) {
                           Tensor g = t.grad(self);
                           t.accumulate(ia, g);
                           g.array() = -g.array();
                           t.accumulate(ib, g);
                         });
}

Var mul(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "mul");
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(Tensor(a.shape(), a.value().array() * b.value().array()), {ia, ib},
                         [ia, ib](Tape& t, std::size_t self) {
                           const Tensor g = t.grad(self);
                           t.accumulate(ia, Tensor(g.shape(), g.array() * t.value(ib).array()));
                           t.accumulate(ib, Tensor(g.shape(), g.array() * t.value(ia).array()));
                         });
}

Var scale(const Var& x, double factor) {
  const std::size_t in = x.id();
  return x.tape().record(Tensor(x.shape(), x.value().array() * factor), {in},
                         [in, factor](Tape& t, std::size_t self) {
                           Tensor g = t.grad(self);
                           g.array() *= factor;
                           t.accumulate(in, g);
                         });
}

Var sum(const Var& x) {
  const std::size_t in = x.id();
  return x.tape().record(Tensor({1}, {x.value().array().sum()}), {in},
                         [in](Tape& t, std::size_t self) {
                           t.accumulate(in, Tensor::constant(t.value(in).shape(),
                                                             t.grad(self)[0]));
                         });
}

Var mean(const Var& x) {
  const double n = static_cast<double>(x.value().size());
  return scale(sum(x), 1.0 / n);
}

Var mse(const Var& prediction, const Var& target) {
  return mean(mul(sub(prediction, target), sub(prediction, target)));
}

Var cross_entropy(const Var& probs, const Var& one_hot) {
  require_same_tape(probs, one_hot);
  require_same_shape(probs, one_hot, "cross_entropy");
  static constexpr double kFloor = 1e-12;
  const Tensor& p = probs.value();
  const Tensor& y = one_hot.value();
  const Index cols = p.dim(p.rank() - 1);
  const double batch = static_cast<double>(p.size() / cols);
  const double loss = -(y.array() * p.array().max(kFloor).log()).sum() / batch;
  const std::size_t ip = probs.id(), iy = one_hot.id();
  return probs.tape().record(
      Tensor({1}, {loss}), {ip, iy}, [ip, iy, batch](Tape& t, std::size_t self) {
        const double g = t.grad(self)[0];
        const Tensor& pv = t.value(ip);
        const Tensor& yv = t.value(iy);
        Tensor dp(pv.shape());
        dp.array() = (pv.array() > kFloor).select(-yv.array() / pv.array(), 0.0) * (g / batch);
        t.accumulate(ip, dp);
        if (t.requires_grad(iy)) {
          Tensor dy(yv.shape());
          dy.array() = -pv.array().max(kFloor).log() * (g / batch);
          t.accumulate(iy, dy);
        }
      });
}

Var kl_divergence(const Var& mu, const Var& log_variance) {
  require_same_tape(mu, log_variance);
  require_same_shape(mu, log_variance, "kl_divergence");
  const Tensor& m = mu.value();
  const Tensor& lv = log_variance.value();
  const double batch = m.rank() == 2 ? static_cast<double>(m.dim(0)) : 1.0;
  const double kl =
      0.5 * (m.array().square() + lv.array().exp() - 1.0 - lv.array()).sum() / batch;
  const std::size_t im = mu.id(), il = log_variance.id();
  return mu.tape().record(Tensor({1}, {kl}), {im, il}, [im, il, batch](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0] / batch;
    t.accumulate(im, Tensor(t.value(im).shape(), t.value(im).array() * g));
    t.accumulate(il, Tensor(t.value(il).shape(), 0.5 * (t.value(il).array().exp() - 1.0) * g));
  });
}

}  // namespace ad
}  // namespace vocnet
