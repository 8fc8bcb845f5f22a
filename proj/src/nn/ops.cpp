#include "patchgen/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace patchgen::nn {

namespace {

std::string shape_of(const Var& v) { return std::to_string(v.rows()) + "x" + std::to_string(v.cols()); }

void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_of(a) + " vs " + shape_of(b));
  }
}

void require_same_tape(const Var& a, const Var& b) {
  if (a.tape() != b.tape()) throw ShapeError("operands belong to different tapes");
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  require_same_tape(a, b);
  if (a.cols() != b.rows()) throw ShapeError("matmul: " + shape_of(a) + " * " + shape_of(b));
  Matrix out = a.value() * b.value();
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

Var add(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_same_shape("add", a, b);
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(a.value() + b.value(), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate(ib, t.grad(self));
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_same_shape("sub", a, b);
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(a.value() - b.value(), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate(ib, -t.grad(self));
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_same_shape("mul", a, b);
  const auto ia = a.id(), ib = b.id();
  Matrix out = a.value().cwiseProduct(b.value());
  return a.tape()->record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
    if (t.requires_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
  });
}

Var scale(const Var& a, double s) {
  const auto ia = a.id();
  return a.tape()->record(a.value() * s, {a},
                          [ia, s](Tape& t, std::size_t self) { t.accumulate(ia, t.grad(self) * s); });
}

Var add_row(const Var& x, const Var& row) {
  require_same_tape(x, row);
  if (row.rows() != 1 || row.cols() != x.cols()) {
    throw ShapeError("add_row: " + shape_of(x) + " + " + shape_of(row));
  }
  Matrix out = x.value().rowwise() + row.value().row(0);
  const auto ix = x.id(), ir = row.id();
  return x.tape()->record(std::move(out), {x, row}, [ix, ir](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    t.accumulate(ix, g);
    if (t.requires_grad(ir)) t.accumulate(ir, g.colwise().sum());
  });
}

Var relu(const Var& x) {
  const auto ix = x.id();
  Matrix out = x.value().cwiseMax(0.0);
  return x.tape()->record(std::move(out), {x}, [ix](Tape& t, std::size_t self) {
    const Matrix& in = t.value(ix);
    t.accumulate(ix, (in.array() > 0.0).select(t.grad(self).array(), 0.0).matrix());
  });
}

Var exp(const Var& x) {
  const auto ix = x.id();
  Matrix out = x.value().array().exp().matrix();
  return x.tape()->record(std::move(out), {x}, [ix](Tape& t, std::size_t self) {
    t.accumulate(ix, t.grad(self).cwiseProduct(t.value(self)));
  });
}

Var clamp(const Var& x, double lo, double hi) {
  const auto ix = x.id();
  Matrix out = x.value().cwiseMax(lo).cwiseMin(hi);
  return x.tape()->record(std::move(out), {x}, [ix, lo, hi](Tape& t, std::size_t self) {
    const Matrix& in = t.value(ix);
    const Matrix mask = ((in.array() >= lo) && (in.array() <= hi)).cast<double>().matrix();
    t.accumulate(ix, t.grad(self).cwiseProduct(mask));
  });
}

Var log_sigmoid(const Var& x) {
  const auto ix = x.id();
  Matrix out = x.value().unaryExpr([](double v) { return std::min(v, 0.0) - std::log1p(std::exp(-std::abs(v))); });
  return x.tape()->record(std::move(out), {x}, [ix](Tape& t, std::size_t self) {
    // d/dx log sigmoid(x) = sigmoid(-x)
    const Matrix d = t.value(ix).unaryExpr([](double v) {
      return v >= 0.0 ? std::exp(-v) / (1.0 + std::exp(-v)) : 1.0 / (1.0 + std::exp(v));
    });
    t.accumulate(ix, t.grad(self).cwiseProduct(d));
  });
}

Var sum(const Var& x) {
  const auto ix = x.id();
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  return x.tape()->record(std::move(out), {x}, [ix](Tape& t, std::size_t self) {
    const Matrix& in = t.value(ix);
    t.accumulate(ix, Matrix::Constant(in.rows(), in.cols(), t.grad(self)(0, 0)));
  });
}

Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

Var sum_cols(const Var& x) {
  const auto ix = x.id();
  Matrix out = x.value().rowwise().sum();
  return x.tape()->record(std::move(out), {x}, [ix](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Eigen::Index c = t.value(ix).cols();
    t.accumulate(ix, g.replicate(1, c));
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    require_same_tape(parts.front(), p);
    if (p.rows() != rows) throw ShapeError("concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<std::pair<std::size_t, Eigen::Index>> spans;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    spans.emplace_back(p.id(), at);
    at += p.cols();
  }
  return parts.front().tape()->record(std::move(out), parts, [spans](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    for (const auto& [id, offset] : spans) {
      if (t.requires_grad(id)) t.accumulate(id, g.middleCols(offset, t.value(id).cols()));
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    require_same_tape(parts.front(), p);
    if (p.cols() != cols) throw ShapeError("concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<std::pair<std::size_t, Eigen::Index>> spans;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    spans.emplace_back(p.id(), at);
    at += p.rows();
  }
  return parts.front().tape()->record(std::move(out), parts, [spans](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    for (const auto& [id, offset] : spans) {
      if (t.requires_grad(id)) t.accumulate(id, g.middleRows(offset, t.value(id).rows()));
    }
  });
}

Var slice_rows(const Var& x, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > x.rows()) throw ShapeError("slice_rows out of range");
  const auto ix = x.id();
  Matrix out = x.value().middleRows(begin, count);
  return x.tape()->record(std::move(out), {x}, [ix, begin, count](Tape& t, std::size_t self) {
    Matrix g = Matrix::Zero(t.value(ix).rows(), t.value(ix).cols());
    g.middleRows(begin, count) = t.grad(self);
    t.accumulate(ix, g);
  });
}

Var slice_cols(const Var& x, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > x.cols()) throw ShapeError("slice_cols out of range");
  const auto ix = x.id();
  Matrix out = x.value().middleCols(begin, count);
  return x.tape()->record(std::move(out), {x}, [ix, begin, count](Tape& t, std::size_t self) {
    Matrix g = Matrix::Zero(t.value(ix).rows(), t.value(ix).cols());
    g.middleCols(begin, count) = t.grad(self);
    t.accumulate(ix, g);
  });
}

Var gather_rows(const Var& x, std::vector<Eigen::Index> index) {
  const Matrix& in = x.value();
  Matrix out(static_cast<Eigen::Index>(index.size()), in.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= in.rows()) throw ShapeError("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = in.row(index[i]);
  }
  const auto ix = x.id();
  return x.tape()->record(std::move(out), {x}, [ix, index = std::move(index)](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Matrix acc = Matrix::Zero(t.value(ix).rows(), t.value(ix).cols());
    for (std::size_t i = 0; i < index.size(); ++i) acc.row(index[i]) += g.row(static_cast<Eigen::Index>(i));
    t.accumulate(ix, acc);
  });
}

Var segment_max(const Var& x, Eigen::Index group) {
  const Matrix& in = x.value();
  if (group < 1 || in.rows() % group != 0) throw ShapeError("segment_max: rows not divisible by group");
  const Eigen::Index segments = in.rows() / group;
  Matrix out(segments, in.cols());
  Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> arg(segments, in.cols());
  for (Eigen::Index s = 0; s < segments; ++s) {
    out.row(s) = in.row(s * group);
    arg.row(s).setConstant(s * group);
    for (Eigen::Index r = s * group + 1; r < (s + 1) * group; ++r) {
      for (Eigen::Index c = 0; c < in.cols(); ++c) {
        if (in(r, c) > out(s, c)) {
          out(s, c) = in(r, c);
          arg(s, c) = r;
        }
      }
    }
  }
  const auto ix = x.id();
  return x.tape()->record(std::move(out), {x}, [ix, arg = std::move(arg)](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Matrix acc = Matrix::Zero(t.value(ix).rows(), t.value(ix).cols());
    for (Eigen::Index s = 0; s < arg.rows(); ++s) {
      for (Eigen::Index c = 0; c < arg.cols(); ++c) acc(arg(s, c), c) += g(s, c);
    }
    t.accumulate(ix, acc);
  });
}

Var segment_mean(const Var& x, Eigen::Index group) {
  const Matrix& in = x.value();
  if (group < 1 || in.rows() % group != 0) throw ShapeError("segment_mean: rows not divisible by group");
  const Eigen::Index segments = in.rows() / group;
  Matrix out(segments, in.cols());
  for (Eigen::Index s = 0; s < segments; ++s) out.row(s) = in.middleRows(s * group, group).colwise().mean();
  const auto ix = x.id();
  return x.tape()->record(std::move(out), {x}, [ix, group](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Matrix acc(t.value(ix).rows(), t.value(ix).cols());
    const double inv = 1.0 / static_cast<double>(group);
    for (Eigen::Index s = 0; s < g.rows(); ++s) {
      acc.middleRows(s * group, group) = (g.row(s) * inv).replicate(group, 1);
    }
    t.accumulate(ix, acc);
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  require_same_tape(x, gain);
  require_same_tape(x, bias);
  const Matrix& in = x.value();
  if (gain.rows() != 1 || gain.cols() != in.cols() || bias.rows() != 1 || bias.cols() != in.cols()) {
    throw ShapeError("layer_norm: gain/bias must be 1x" + std::to_string(in.cols()));
  }
  const Eigen::Index n = in.rows(), c = in.cols();
  Matrix normed(n, c);
  Eigen::VectorXd inv_std(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mu = in.row(r).mean();
    const double var = (in.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    normed.row(r) = (in.row(r).array() - mu) * inv_std(r);
  }
  Matrix out = (normed.array().rowwise() * gain.value().row(0).array()).rowwise() + bias.value().row(0).array();
  const auto ix = x.id(), ig = gain.id(), ib = bias.id();
  return x.tape()->record(std::move(out), {x, gain, bias},
                          [ix, ig, ib, normed = std::move(normed), inv_std = std::move(inv_std)](Tape& t,
                                                                                                 std::size_t self) {
                            const Matrix& g = t.grad(self);
                            if (t.requires_grad(ig)) t.accumulate(ig, g.cwiseProduct(normed).colwise().sum());
                            if (t.requires_grad(ib)) t.accumulate(ib, g.colwise().sum());
                            if (!t.requires_grad(ix)) return;
                            const Matrix dn = g.array().rowwise() * t.value(ig).row(0).array();
                            Matrix dx(dn.rows(), dn.cols());
                            for (Eigen::Index r = 0; r < dn.rows(); ++r) {
                              const double m1 = dn.row(r).mean();
                              const double m2 = dn.row(r).cwiseProduct(normed.row(r)).mean();
                              dx.row(r) = (dn.row(r).array() - m1 - normed.row(r).array() * m2) * inv_std(r);
                            }
                            t.accumulate(ix, dx);
                          });
}

Var l2_normalize_rows(const Var& x, double eps) {
  const Matrix& in = x.value();
  Eigen::VectorXd norms = in.rowwise().norm().cwiseMax(eps);
  Matrix out = in.array().colwise() / norms.array();
  const auto ix = x.id();
  return x.tape()->record(std::move(out), {x}, [ix, norms = std::move(norms), eps](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& y = t.value(self);
    const Matrix& in = t.value(ix);
    Matrix dx(g.rows(), g.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      if (in.row(r).norm() <= eps) {
        dx.row(r) = g.row(r) / eps;
      } else {
        dx.row(r) = (g.row(r) - y.row(r) * y.row(r).dot(g.row(r))) / norms(r);
      }
    }
    t.accumulate(ix, dx);
  });
}

Matrix softmax_rows(const Matrix& scores) {
  Matrix p(scores.rows(), scores.cols());
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    const double m = scores.row(r).maxCoeff();
    p.row(r) = (scores.row(r).array() - m).exp();
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

namespace {

// dS = P .* (dP - rowsum(dP .* P))
Matrix softmax_backward(const Matrix& p, const Matrix& dp) {
  const Eigen::VectorXd dot = dp.cwiseProduct(p).rowwise().sum();
  return p.cwiseProduct(dp - dot.replicate(1, dp.cols()));
}

}  // namespace

Var grouped_attention(const Var& q, const Var& k, const Var& v, Eigen::Index group, Eigen::Index heads) {
  require_same_tape(q, k);
  require_same_tape(q, v);
  const Matrix& Q = q.value();
  const Matrix& K = k.value();
  const Matrix& V = v.value();
  if (Q.rows() != K.rows() || Q.cols() != K.cols()) throw ShapeError("attention: Q and K must share shape");
  if (K.rows() != V.rows()) throw ShapeError("attention: K and V must share row count");
  if (group < 1 || Q.rows() % group != 0) throw ShapeError("attention: rows not divisible by sequence length");
  if (heads < 1 || Q.cols() % heads != 0 || V.cols() % heads != 0) {
    throw ShapeError("attention: head count must divide key and value widths");
  }
  const Eigen::Index groups = Q.rows() / group;
  const Eigen::Index dk = Q.cols() / heads, dv = V.cols() / heads;
  const double s = 1.0 / std::sqrt(static_cast<double>(dk));

  Matrix out(Q.rows(), V.cols());
  std::vector<Matrix> probs(static_cast<std::size_t>(groups * heads));
  for (Eigen::Index g = 0; g < groups; ++g) {
    for (Eigen::Index h = 0; h < heads; ++h) {
      const auto qb = Q.block(g * group, h * dk, group, dk);
      const auto kb = K.block(g * group, h * dk, group, dk);
      Matrix p = softmax_rows((qb * kb.transpose()) * s);
      out.block(g * group, h * dv, group, dv).noalias() = p * V.block(g * group, h * dv, group, dv);
      probs[static_cast<std::size_t>(g * heads + h)] = std::move(p);
    }
  }
  const auto iq = q.id(), ik = k.id(), iv = v.id();
  return q.tape()->record(
      std::move(out), {q, k, v},
      [iq, ik, iv, group, heads, groups, dk, dv, s, probs = std::move(probs)](Tape& t, std::size_t self) {
        const Matrix& G = t.grad(self);
        const Matrix& Q = t.value(iq);
        const Matrix& K = t.value(ik);
        const Matrix& V = t.value(iv);
        Matrix dQ = Matrix::Zero(Q.rows(), Q.cols());
        Matrix dK = Matrix::Zero(K.rows(), K.cols());
        Matrix dV = Matrix::Zero(V.rows(), V.cols());
        for (Eigen::Index g = 0; g < groups; ++g) {
          for (Eigen::Index h = 0; h < heads; ++h) {
            const Matrix& p = probs[static_cast<std::size_t>(g * heads + h)];
            const auto go = G.block(g * group, h * dv, group, dv);
            dV.block(g * group, h * dv, group, dv).noalias() = p.transpose() * go;
            const Matrix dp = go * V.block(g * group, h * dv, group, dv).transpose();
            const Matrix ds = softmax_backward(p, dp) * s;
            dQ.block(g * group, h * dk, group, dk).noalias() = ds * K.block(g * group, h * dk, group, dk);
            dK.block(g * group, h * dk, group, dk).noalias() = ds.transpose() * Q.block(g * group, h * dk, group, dk);
          }
        }
        t.accumulate(iq, dQ);
        t.accumulate(ik, dK);
        t.accumulate(iv, dV);
      });
}

Var scaled_dot_attention(const Var& q, const Var& k, const Var& v) {
  if (q.cols() != k.cols()) throw ShapeError("attention: Q and K must share d_k");
  if (q.rows() != k.rows()) throw ShapeError("attention: self-attention requires equal Q and K lengths");
  return grouped_attention(q, k, v, q.rows(), 1);
}

namespace {

// Values of one (cloud, head) arranged as patches x (points * d_head).
Matrix gather_patch_values(const Matrix& v, Eigen::Index cloud, Eigen::Index head, Eigen::Index patches,
                           Eigen::Index points, Eigen::Index dh) {
  Matrix out(patches, points * dh);
  for (Eigen::Index m = 0; m < patches; ++m) {
    for (Eigen::Index j = 0; j < points; ++j) {
      out.block(m, j * dh, 1, dh) = v.block((cloud * patches + m) * points + j, head * dh, 1, dh);
    }
  }
  return out;
}

void scatter_patch_values(Matrix& dst, const Matrix& src, Eigen::Index cloud, Eigen::Index head,
                          Eigen::Index patches, Eigen::Index points, Eigen::Index dh) {
  for (Eigen::Index m = 0; m < patches; ++m) {
    for (Eigen::Index j = 0; j < points; ++j) {
      dst.block((cloud * patches + m) * points + j, head * dh, 1, dh) = src.block(m, j * dh, 1, dh);
    }
  }
}

}  // namespace

Matrix patch_attention_weights(const Matrix& q, const Matrix& k, Eigen::Index patches, Eigen::Index heads,
                               Eigen::Index cloud, Eigen::Index head) {
  const Eigen::Index dk = q.cols() / heads;
  const double s = 1.0 / std::sqrt(static_cast<double>(dk));
  const auto qb = q.block(cloud * patches, head * dk, patches, dk);
  const auto kb = k.block(cloud * patches, head * dk, patches, dk);
  return softmax_rows((qb * kb.transpose()) * s);
}

Var patch_attention(const Var& q, const Var& k, const Var& v, Eigen::Index patches, Eigen::Index points,
                    Eigen::Index heads) {
  require_same_tape(q, k);
  require_same_tape(q, v);
  const Matrix& Q = q.value();
  const Matrix& K = k.value();
  const Matrix& V = v.value();
  if (Q.rows() != K.rows() || Q.cols() != K.cols()) throw ShapeError("patch_attention: Q and K must share shape");
  if (patches < 1 || points < 1 || Q.rows() % patches != 0) {
    throw ShapeError("patch_attention: descriptor rows not divisible by patch count");
  }
  const Eigen::Index clouds = Q.rows() / patches;
  if (V.rows() != clouds * patches * points) throw ShapeError("patch_attention: value rows != clouds*patches*points");
  if (heads < 1 || Q.cols() % heads != 0 || V.cols() % heads != 0) {
    throw ShapeError("patch_attention: head count must divide key and value widths");
  }
  const Eigen::Index dk = Q.cols() / heads, dv = V.cols() / heads;
  const double s = 1.0 / std::sqrt(static_cast<double>(dk));

  Matrix out(V.rows(), V.cols());
  std::vector<Matrix> probs(static_cast<std::size_t>(clouds * heads));
  for (Eigen::Index b = 0; b < clouds; ++b) {
    for (Eigen::Index h = 0; h < heads; ++h) {
      Matrix a = patch_attention_weights(Q, K, patches, heads, b, h);
      const Matrix mixed = a * gather_patch_values(V, b, h, patches, points, dv);
      scatter_patch_values(out, mixed, b, h, patches, points, dv);
      probs[static_cast<std::size_t>(b * heads + h)] = std::move(a);
    }
  }
  const auto iq = q.id(), ik = k.id(), iv = v.id();
  return q.tape()->record(
      std::move(out), {q, k, v},
      [iq, ik, iv, patches, points, heads, clouds, dk, dv, s, probs = std::move(probs)](Tape& t, std::size_t self) {
        const Matrix& G = t.grad(self);
        const Matrix& Q = t.value(iq);
        const Matrix& K = t.value(ik);
        const Matrix& V = t.value(iv);
        Matrix dQ = Matrix::Zero(Q.rows(), Q.cols());
        Matrix dK = Matrix::Zero(K.rows(), K.cols());
        Matrix dV = Matrix::Zero(V.rows(), V.cols());
        for (Eigen::Index b = 0; b < clouds; ++b) {
          for (Eigen::Index h = 0; h < heads; ++h) {
            const Matrix& a = probs[static_cast<std::size_t>(b * heads + h)];
            const Matrix go = gather_patch_values(G, b, h, patches, points, dv);
            const Matrix vals = gather_patch_values(V, b, h, patches, points, dv);
            scatter_patch_values(dV, a.transpose() * go, b, h, patches, points, dv);
            const Matrix ds = softmax_backward(a, go * vals.transpose()) * s;
            dQ.block(b * patches, h * dk, patches, dk).noalias() = ds * K.block(b * patches, h * dk, patches, dk);
            dK.block(b * patches, h * dk, patches, dk).noalias() =
                ds.transpose() * Q.block(b * patches, h * dk, patches, dk);
          }
        }
        t.accumulate(iq, dQ);
        t.accumulate(ik, dK);
        t.accumulate(iv, dV);
      });
}

}  // namespace patchgen::nn
