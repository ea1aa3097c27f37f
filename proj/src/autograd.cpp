#include "textsr/autograd.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <utility>
#include <stdexcept>

namespace textsr {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

CMapMat as_mat(const Tensor& t) {
  if (t.rank() != 2) throw std::invalid_argument("autograd: expected rank-2 tensor");
  return CMapMat(t.v.data(), t.shape[0], t.shape[1]);
}

MapMat as_mat(Tensor& t) {
  if (t.rank() != 2) throw std::invalid_argument("autograd: expected rank-2 tensor");
  return MapMat(t.v.data(), t.shape[0], t.shape[1]);
}

void check_bchw(const Tensor& t, const char* where) {
  if (t.rank() != 4) throw std::invalid_argument(std::string(where) + ": expected (B,C,H,W)");
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

int Graph::make(Tensor val, std::vector<int> parents, std::function<void(Graph&, int)> back) {
  Node n;
  n.val = std::move(val);
  n.parents = std::move(parents);
  n.needs_grad = any_needs_grad(n.parents);
  if (n.needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

bool Graph::any_needs_grad(const std::vector<int>& ids) const {
  for (int id : ids)
    if (nodes_[id].needs_grad) return true;
  return false;
}

int Graph::leaf(Tensor t, bool needs_grad) {
  Node n;
  n.val = std::move(t);
  n.needs_grad = needs_grad;
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

const Tensor& Graph::grad_of(int id) const {
  if (nodes_[id].grad.v.empty())
    throw std::logic_error("grad_of: no gradient (did you call backward?)");
  return nodes_[id].grad;
}

Tensor& Graph::grad_mut(int id) {
  Node& n = nodes_[id];
  if (n.grad.v.empty()) n.grad = Tensor(n.val.shape);
  return n.grad;
}

void Graph::backward(int loss_id) {
  if (nodes_[loss_id].val.numel() != 1)
    throw std::invalid_argument("backward: loss must be scalar");
  // Mark the subgraph that both reaches the loss and needs gradients.
  std::vector<char> active(nodes_.size(), 0);
  active[loss_id] = 1;
  for (int id = loss_id; id >= 0; --id) {
    if (!active[id]) continue;
    for (int p : nodes_[id].parents)
      if (nodes_[p].needs_grad) active[p] = 1;
  }
  grad_mut(loss_id).v[0] = 1.0;
  for (int id = loss_id; id >= 0; --id) {
    if (!active[id] || !nodes_[id].back) continue;
    if (nodes_[id].grad.v.empty()) continue;
    nodes_[id].back(*this, id);
  }
}

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

int Graph::add(int a, int b) {
  require_same_shape(nodes_[a].val, nodes_[b].val, "add");
  Tensor out(nodes_[a].val.shape);
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = nodes_[a].val.v[i] + nodes_[b].val.v[i];
  return make(std::move(out), {a, b}, [a, b](Graph& g, int self) {
    const Tensor& gr = g.nodes_[self].grad;
    if (g.nodes_[a].needs_grad) {
      Tensor& ga = g.grad_mut(a);
      for (size_t i = 0; i < gr.v.size(); ++i) ga.v[i] += gr.v[i];
    }
    if (g.nodes_[b].needs_grad) {
      Tensor& gb = g.grad_mut(b);
      for (size_t i = 0; i < gr.v.size(); ++i) gb.v[i] += gr.v[i];
    }
  });
}

int Graph::sub(int a, int b) {
  require_same_shape(nodes_[a].val, nodes_[b].val, "sub");
  Tensor out(nodes_[a].val.shape);
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = nodes_[a].val.v[i] - nodes_[b].val.v[i];
  return make(std::move(out), {a, b}, [a, b](Graph& g, int self) {
    const Tensor& gr = g.nodes_[self].grad;
    if (g.nodes_[a].needs_grad) {
      Tensor& ga = g.grad_mut(a);
      for (size_t i = 0; i < gr.v.size(); ++i) ga.v[i] += gr.v[i];
    }
    if (g.nodes_[b].needs_grad) {
      Tensor& gb = g.grad_mut(b);
      for (size_t i = 0; i < gr.v.size(); ++i) gb.v[i] -= gr.v[i];
    }
  });
}

int Graph::mul(int a, int b) {
  require_same_shape(nodes_[a].val, nodes_[b].val, "mul");
  Tensor out(nodes_[a].val.shape);
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = nodes_[a].val.v[i] * nodes_[b].val.v[i];
  return make(std::move(out), {a, b}, [a, b](Graph& g, int self) {
    const Tensor& gr = g.nodes_[self].grad;
    if (g.nodes_[a].needs_grad) {
      Tensor& ga = g.grad_mut(a);
      const Tensor& vb = g.nodes_[b].val;
      for (size_t i = 0; i < gr.v.size(); ++i) ga.v[i] += gr.v[i] * vb.v[i];
    }
    if (g.nodes_[b].needs_grad) {
      Tensor& gb = g.grad_mut(b);
      const Tensor& va = g.nodes_[a].val;
      for (size_t i = 0; i < gr.v.size(); ++i) gb.v[i] += gr.v[i] * va.v[i];
    }
  });
}

int Graph::scale(int a, double s) {
  Tensor out(nodes_[a].val.shape);
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = nodes_[a].val.v[i] * s;
  return make(std::move(out), {a}, [a, s](Graph& g, int self) {
    const Tensor& gr = g.nodes_[self].grad;
    Tensor& ga = g.grad_mut(a);
    for (size_t i = 0; i < gr.v.size(); ++i) ga.v[i] += gr.v[i] * s;
  });
}

int Graph::silu(int a) {
  Tensor out(nodes_[a].val.shape);
  for (size_t i = 0; i < out.v.size(); ++i) {
    double x = nodes_[a].val.v[i];
    out.v[i] = x * sigmoid(x);
  }
  return make(std::move(out), {a}, [a](Graph& g, int self) {
    const Tensor& gr = g.nodes_[self].grad;
    const Tensor& va = g.nodes_[a].val;
    Tensor& ga = g.grad_mut(a);
    for (size_t i = 0; i < gr.v.size(); ++i) {
      double s = sigmoid(va.v[i]);
      ga.v[i] += gr.v[i] * s * (1.0 + va.v[i] * (1.0 - s));
    }
  });
}

// ---------------------------------------------------------------------------
// Matrix ops
// ---------------------------------------------------------------------------

int Graph::matmul(int a, int b) {
  const Tensor& va = nodes_[a].val;
  const Tensor& vb = nodes_[b].val;
  if (va.rank() != 2 || vb.rank() != 2 || va.shape[1] != vb.shape[0])
    throw std::invalid_argument("matmul: incompatible shapes " + va.shape_str() + " x " +
                                vb.shape_str());
  Tensor out({va.shape[0], vb.shape[1]});
  as_mat(out).noalias() = as_mat(va) * as_mat(vb);
  return make(std::move(out), {a, b}, [a, b](Graph& g, int self) {
    CMapMat gr = as_mat(std::as_const(g.nodes_[self].grad));
    if (g.nodes_[a].needs_grad)
      as_mat(g.grad_mut(a)).noalias() += gr * as_mat(g.nodes_[b].val).transpose();
    if (g.nodes_[b].needs_grad)
      as_mat(g.grad_mut(b)).noalias() += as_mat(g.nodes_[a].val).transpose() * gr;
  });
}

int Graph::matmul_nt(int a, int b) {
  const Tensor& va = nodes_[a].val;
  const Tensor& vb = nodes_[b].val;
  if (va.rank() != 2 || vb.rank() != 2 || va.shape[1] != vb.shape[1])
    throw std::invalid_argument("matmul_nt: incompatible shapes");
  Tensor out({va.shape[0], vb.shape[0]});
  as_mat(out).noalias() = as_mat(va) * as_mat(vb).transpose();
  return make(std::move(out), {a, b}, [a, b](Graph& g, int self) {
    CMapMat gr = as_mat(std::as_const(g.nodes_[self].grad));
    if (g.nodes_[a].needs_grad)
      as_mat(g.grad_mut(a)).noalias() += gr * as_mat(g.nodes_[b].val);
    if (g.nodes_[b].needs_grad)
      as_mat(g.grad_mut(b)).noalias() += gr.transpose() * as_mat(g.nodes_[a].val);
  });
}

int Graph::linear(int x, int w, int b) {
  const Tensor& vx = nodes_[x].val;
  const Tensor& vw = nodes_[w].val;
  if (vx.rank() != 2 || vw.rank() != 2 || vx.shape[1] != vw.shape[0])
    throw std::invalid_argument("linear: incompatible shapes");
  Tensor out({vx.shape[0], vw.shape[1]});
  as_mat(out).noalias() = as_mat(vx) * as_mat(vw);
  if (b >= 0) {
    const Tensor& vb = nodes_[b].val;
    if (vb.numel() != vw.shape[1]) throw std::invalid_argument("linear: bias dim mismatch");
    MapMat m = as_mat(out);
    for (int i = 0; i < m.rows(); ++i)
      for (int j = 0; j < m.cols(); ++j) m(i, j) += vb.v[j];
  }
  std::vector<int> parents = b >= 0 ? std::vector<int>{x, w, b} : std::vector<int>{x, w};
  return make(std::move(out), parents, [x, w, b](Graph& g, int self) {
    CMapMat gr = as_mat(std::as_const(g.nodes_[self].grad));
    if (g.nodes_[x].needs_grad)
      as_mat(g.grad_mut(x)).noalias() += gr * as_mat(g.nodes_[w].val).transpose();
    if (g.nodes_[w].needs_grad)
      as_mat(g.grad_mut(w)).noalias() += as_mat(g.nodes_[x].val).transpose() * gr;
    if (b >= 0 && g.nodes_[b].needs_grad) {
      Tensor& gb = g.grad_mut(b);
      for (int i = 0; i < gr.rows(); ++i)
        for (int j = 0; j < gr.cols(); ++j) gb.v[j] += gr(i, j);
    }
  });
}

int Graph::softmax_rows(int x) {
  const Tensor& vx = nodes_[x].val;
  if (vx.rank() != 2) throw std::invalid_argument("softmax_rows: expected (N,D)");
  Tensor out(vx.shape);
  int N = vx.shape[0], D = vx.shape[1];
  for (int i = 0; i < N; ++i) {
    const double* row = &vx.v[static_cast<size_t>(i) * D];
    double m = row[0];
    for (int j = 1; j < D; ++j) m = std::max(m, row[j]);
    double s = 0.0;
    double* orow = &out.v[static_cast<size_t>(i) * D];
    for (int j = 0; j < D; ++j) {
      orow[j] = std::exp(row[j] - m);
      s += orow[j];
    }
    for (int j = 0; j < D; ++j) orow[j] /= s;
  }
  return make(std::move(out), {x}, [x](Graph& g, int self) {
    const Tensor& gr = g.nodes_[self].grad;
    const Tensor& p = g.nodes_[self].val;
    Tensor& gx = g.grad_mut(x);
    int N = p.shape[0], D = p.shape[1];
    for (int i = 0; i < N; ++i) {
      const double* prow = &p.v[static_cast<size_t>(i) * D];
      const double* grow = &gr.v[static_cast<size_t>(i) * D];
      double dot = 0.0;
      for (int j = 0; j < D; ++j) dot += prow[j] * grow[j];
      double* gxr = &gx.v[static_cast<size_t>(i) * D];
      for (int j = 0; j < D; ++j) gxr[j] += prow[j] * (grow[j] - dot);
    }
  });
}

namespace {

// Shared layernorm math: normalize groups of `D` values with stride `stride`
// starting at base offsets. Used for both row (stride 1) and channel
// (stride H*W) normalization.
struct NormStats {
  std::vector<double> mu, inv_std;
};

constexpr double kLnEps = 1e-5;

}  // namespace

int Graph::row_layernorm(int x, int gain, int bias) {
  const Tensor& vx = nodes_[x].val;
  if (vx.rank() != 2) throw std::invalid_argument("row_layernorm: expected (N,D)");
  int N = vx.shape[0], D = vx.shape[1];
  if (nodes_[gain].val.numel() != D || nodes_[bias].val.numel() != D)
    throw std::invalid_argument("row_layernorm: gain/bias dim mismatch");
  Tensor out(vx.shape);
  auto stats = std::make_shared<NormStats>();
  stats->mu.resize(N);
  stats->inv_std.resize(N);
  const Tensor& vgain = nodes_[gain].val;
  const Tensor& vbias = nodes_[bias].val;
  for (int i = 0; i < N; ++i) {
    const double* row = &vx.v[static_cast<size_t>(i) * D];
    double mu = 0.0;
    for (int j = 0; j < D; ++j) mu += row[j];
    mu /= D;
    double var = 0.0;
    for (int j = 0; j < D; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= D;
    double inv = 1.0 / std::sqrt(var + kLnEps);
    stats->mu[i] = mu;
    stats->inv_std[i] = inv;
    double* orow = &out.v[static_cast<size_t>(i) * D];
    for (int j = 0; j < D; ++j) orow[j] = (row[j] - mu) * inv * vgain.v[j] + vbias.v[j];
  }
  return make(std::move(out), {x, gain, bias}, [x, gain, bias, stats](Graph& g, int self) {
    const Tensor& gr = g.nodes_[self].grad;
    const Tensor& vx = g.nodes_[x].val;
    const Tensor& vgain = g.nodes_[gain].val;
    int N = vx.shape[0], D = vx.shape[1];
    bool need_x = g.nodes_[x].needs_grad;
    bool need_g = g.nodes_[gain].needs_grad;
    bool need_b = g.nodes_[bias].needs_grad;
    for (int i = 0; i < N; ++i) {
      const double* row = &vx.v[static_cast<size_t>(i) * D];
      const double* grow = &gr.v[static_cast<size_t>(i) * D];
      double mu = stats->mu[i], inv = stats->inv_std[i];
      if (need_g || need_b) {
        Tensor& gg = g.grad_mut(gain);
        Tensor& gb = g.grad_mut(bias);
        for (int j = 0; j < D; ++j) {
          if (need_g) gg.v[j] += grow[j] * (row[j] - mu) * inv;
          if (need_b) gb.v[j] += grow[j];
        }
      }
      if (need_x) {
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (int j = 0; j < D; ++j) {
          double dxhat = grow[j] * vgain.v[j];
          double xhat = (row[j] - mu) * inv;
          sum_dxhat += dxhat;
          sum_dxhat_xhat += dxhat * xhat;
        }
        Tensor& gx = g.grad_mut(x);
        double* gxr = &gx.v[static_cast<size_t>(i) * D];
        for (int j = 0; j < D; ++j) {
          double dxhat = grow[j] * vgain.v[j];
          double xhat = (row[j] - mu) * inv;
          gxr[j] += inv * (dxhat - sum_dxhat / D - xhat * sum_dxhat_xhat / D);
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Conv stack
// ---------------------------------------------------------------------------

int Graph::conv2d(int x, int w, int b, int ksize) {
  if (ksize != 1 && ksize != 3) throw std::invalid_argument("conv2d: ksize must be 1 or 3");
  const Tensor& vx = nodes_[x].val;
  const Tensor& vw = nodes_[w].val;
  check_bchw(vx, "conv2d");
  if (vw.rank() != 4 || vw.shape[1] != vx.shape[1] || vw.shape[2] != ksize ||
      vw.shape[3] != ksize)
    throw std::invalid_argument("conv2d: weight shape mismatch");
  int B = vx.shape[0], Ci = vx.shape[1], H = vx.shape[2], W = vx.shape[3];
  int Co = vw.shape[0];
  int pad = ksize / 2;
  int patch = Ci * ksize * ksize;
  long long rows = static_cast<long long>(B) * H * W;

  auto cols = std::make_shared<Tensor>(std::vector<int>{static_cast<int>(rows), patch});
  // im2col, rows ordered (b, y, x)
  {
    double* cp = cols->v.data();
    for (int bi = 0; bi < B; ++bi)
      for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx) {
          for (int c = 0; c < Ci; ++c)
            for (int ky = 0; ky < ksize; ++ky) {
              int sy = y + ky - pad;
              for (int kx = 0; kx < ksize; ++kx) {
                int sx = xx + kx - pad;
                *cp++ = (sy >= 0 && sy < H && sx >= 0 && sx < W) ? vx.at(bi, c, sy, sx) : 0.0;
              }
            }
        }
  }

  // out_rows (rows, Co) = cols (rows, patch) x Wmat(Co, patch)^T
  Tensor out_rows({static_cast<int>(rows), Co});
  {
    CMapMat wm(vw.v.data(), Co, patch);
    as_mat(out_rows).noalias() = as_mat(*cols) * wm.transpose();
  }
  Tensor out({B, Co, H, W});
  {
    const double* orp = out_rows.v.data();
    const Tensor* vb = b >= 0 ? &nodes_[b].val : nullptr;
    if (vb && vb->numel() != Co) throw std::invalid_argument("conv2d: bias dim mismatch");
    for (int bi = 0; bi < B; ++bi)
      for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx) {
          for (int c = 0; c < Co; ++c)
            out.at(bi, c, y, xx) = orp[c] + (vb ? vb->v[c] : 0.0);
          orp += Co;
        }
  }

  std::vector<int> parents = b >= 0 ? std::vector<int>{x, w, b} : std::vector<int>{x, w};
  return make(std::move(out), parents,
              [x, w, b, cols, B, Ci, H, W, Co, ksize, pad, patch, rows](Graph& g, int self) {
    const Tensor& gr = g.nodes_[self].grad;
    // Re-pack gradient rows in the same (b, y, x) order.
    Tensor grows({static_cast<int>(rows), Co});
    {
      double* gp = grows.v.data();
      for (int bi = 0; bi < B; ++bi)
        for (int y = 0; y < H; ++y)
          for (int xx = 0; xx < W; ++xx) {
            for (int c = 0; c < Co; ++c) *gp++ = gr.at(bi, c, y, xx);
          }
    }
    if (g.nodes_[w].needs_grad) {
      Tensor& gw = g.grad_mut(w);
      MapMat gwm(gw.v.data(), Co, patch);
      gwm.noalias() += as_mat(grows).transpose() * as_mat(*cols);
    }
    if (b >= 0 && g.nodes_[b].needs_grad) {
      Tensor& gb = g.grad_mut(b);
      CMapMat gm = as_mat(std::as_const(grows));
      for (long long i = 0; i < gm.rows(); ++i)
        for (int c = 0; c < Co; ++c) gb.v[c] += gm(i, c);
    }
    if (g.nodes_[x].needs_grad) {
      Tensor gcols({static_cast<int>(rows), patch});
      CMapMat wm(g.nodes_[w].val.v.data(), Co, patch);
      as_mat(gcols).noalias() = as_mat(grows) * wm;
      Tensor& gx = g.grad_mut(x);
      const double* cp = gcols.v.data();
      for (int bi = 0; bi < B; ++bi)
        for (int y = 0; y < H; ++y)
          for (int xx = 0; xx < W; ++xx) {
            for (int c = 0; c < Ci; ++c)
              for (int ky = 0; ky < ksize; ++ky) {
                int sy = y + ky - pad;
                for (int kx = 0; kx < ksize; ++kx) {
                  int sx = xx + kx - pad;
                  double v = *cp++;
                  if (sy >= 0 && sy < H && sx >= 0 && sx < W) gx.at(bi, c, sy, sx) += v;
                }
              }
          }
    }
  });
}

int Graph::chan_layernorm(int x, int gain, int bias) {
  const Tensor& vx = nodes_[x].val;
  check_bchw(vx, "chan_layernorm");
  int B = vx.shape[0], C = vx.shape[1], H = vx.shape[2], W = vx.shape[3];
  if (nodes_[gain].val.numel() != C || nodes_[bias].val.numel() != C)
    throw std::invalid_argument("chan_layernorm: gain/bias dim mismatch");
  Tensor out(vx.shape);
  auto stats = std::make_shared<NormStats>();
  size_t npos = static_cast<size_t>(B) * H * W;
  stats->mu.resize(npos);
  stats->inv_std.resize(npos);
  const Tensor& vgain = nodes_[gain].val;
  const Tensor& vbias = nodes_[bias].val;
  size_t pos = 0;
  for (int bi = 0; bi < B; ++bi)
    for (int y = 0; y < H; ++y)
      for (int xx = 0; xx < W; ++xx, ++pos) {
        double mu = 0.0;
        for (int c = 0; c < C; ++c) mu += vx.at(bi, c, y, xx);
        mu /= C;
        double var = 0.0;
        for (int c = 0; c < C; ++c) {
          double d = vx.at(bi, c, y, xx) - mu;
          var += d * d;
        }
        var /= C;
        double inv = 1.0 / std::sqrt(var + kLnEps);
        stats->mu[pos] = mu;
        stats->inv_std[pos] = inv;
        for (int c = 0; c < C; ++c)
          out.at(bi, c, y, xx) = (vx.at(bi, c, y, xx) - mu) * inv * vgain.v[c] + vbias.v[c];
      }
  return make(std::move(out), {x, gain, bias}, [x, gain, bias, stats](Graph& g, int self) {
    const Tensor& gr = g.nodes_[self].grad;
    const Tensor& vx = g.nodes_[x].val;
    const Tensor& vgain = g.nodes_[gain].val;
    int B = vx.shape[0], C = vx.shape[1], H = vx.shape[2], W = vx.shape[3];
    bool need_x = g.nodes_[x].needs_grad;
    bool need_g = g.nodes_[gain].needs_grad;
    bool need_b = g.nodes_[bias].needs_grad;
    size_t pos = 0;
    for (int bi = 0; bi < B; ++bi)
      for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx, ++pos) {
          double mu = stats->mu[pos], inv = stats->inv_std[pos];
          if (need_g || need_b) {
            Tensor& gg = g.grad_mut(gain);
            Tensor& gb = g.grad_mut(bias);
            for (int c = 0; c < C; ++c) {
              double grv = gr.at(bi, c, y, xx);
              if (need_g) gg.v[c] += grv * (vx.at(bi, c, y, xx) - mu) * inv;
              if (need_b) gb.v[c] += grv;
            }
          }
          if (need_x) {
            double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
            for (int c = 0; c < C; ++c) {
              double dxhat = gr.at(bi, c, y, xx) * vgain.v[c];
              double xhat = (vx.at(bi, c, y, xx) - mu) * inv;
              sum_dxhat += dxhat;
              sum_dxhat_xhat += dxhat * xhat;
            }
            Tensor& gx = g.grad_mut(x);
            for (int c = 0; c < C; ++c) {
              double dxhat = gr.at(bi, c, y, xx) * vgain.v[c];
              double xhat = (vx.at(bi, c, y, xx) - mu) * inv;
              gx.at(bi, c, y, xx) += inv * (dxhat - sum_dxhat / C - xhat * sum_dxhat_xhat / C);
            }
          }
        }
  });
}

int Graph::avgpool_hw(int x, int ph, int pw) {
  const Tensor& vx = nodes_[x].val;
  check_bchw(vx, "avgpool_hw");
  int B = vx.shape[0], C = vx.shape[1], H = vx.shape[2], W = vx.shape[3];
  if (ph < 1 || pw < 1 || H % ph != 0 || W % pw != 0)
    throw std::invalid_argument("avgpool_hw: dims not divisible by pool size");
  int Ho = H / ph, Wo = W / pw;
  Tensor out({B, C, Ho, Wo});
  double inv = 1.0 / (ph * pw);
  for (int bi = 0; bi < B; ++bi)
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < Ho; ++y)
        for (int xx = 0; xx < Wo; ++xx) {
          double acc = 0.0;
          for (int dy = 0; dy < ph; ++dy)
            for (int dx = 0; dx < pw; ++dx) acc += vx.at(bi, c, y * ph + dy, xx * pw + dx);
          out.at(bi, c, y, xx) = acc * inv;
        }
  return make(std::move(out), {x}, [x, ph, pw](Graph& g, int self) {
    const Tensor& gr = g.nodes_[self].grad;
    Tensor& gx = g.grad_mut(x);
    int B = gr.shape[0], C = gr.shape[1], Ho = gr.shape[2], Wo = gr.shape[3];
    double inv = 1.0 / (ph * pw);
    for (int bi = 0; bi < B; ++bi)
      for (int c = 0; c < C; ++c)
        for (int y = 0; y < Ho; ++y)
          for (int xx = 0; xx < Wo; ++xx) {
            double v = gr.at(bi, c, y, xx) * inv;
            for (int dy = 0; dy < ph; ++dy)
              for (int dx = 0; dx < pw; ++dx) gx.at(bi, c, y * ph + dy, xx * pw + dx) += v;
          }
  });
}

int Graph::upsample2(int x) {
  const Tensor& vx = nodes_[x].val;
  check_bchw(vx, "upsample2");
  int B = vx.shape[0], C = vx.shape[1], H = vx.shape[2], W = vx.shape[3];
  Tensor out({B, C, H * 2, W * 2});
  for (int bi = 0; bi < B; ++bi)
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < H * 2; ++y)
        for (int xx = 0; xx < W * 2; ++xx) out.at(bi, c, y, xx) = vx.at(bi, c, y / 2, xx / 2);
  return make(std::move(out), {x}, [x](Graph& g, int self) {
    const Tensor& gr = g.nodes_[self].grad;
    Tensor& gx = g.grad_mut(x);
    int B = gx.shape[0], C = gx.shape[1], H = gx.shape[2], W = gx.shape[3];
    for (int bi = 0; bi < B; ++bi)
      for (int c = 0; c < C; ++c)
        for (int y = 0; y < H * 2; ++y)
          for (int xx = 0; xx < W * 2; ++xx) gx.at(bi, c, y / 2, xx / 2) += gr.at(bi, c, y, xx);
  });
}

int Graph::concat_ch(int a, int b) {
  const Tensor& va = nodes_[a].val;
  const Tensor& vb = nodes_[b].val;
  check_bchw(va, "concat_ch");
  check_bchw(vb, "concat_ch");
  if (va.shape[0] != vb.shape[0] || va.shape[2] != vb.shape[2] || va.shape[3] != vb.shape[3])
    throw std::invalid_argument("concat_ch: shape mismatch");
  int B = va.shape[0], Ca = va.shape[1], Cb = vb.shape[1], H = va.shape[2], W = va.shape[3];
  Tensor out({B, Ca + Cb, H, W});
  for (int bi = 0; bi < B; ++bi) {
    for (int c = 0; c < Ca; ++c)
      for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx) out.at(bi, c, y, xx) = va.at(bi, c, y, xx);
    for (int c = 0; c < Cb; ++c)
      for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx) out.at(bi, Ca + c, y, xx) = vb.at(bi, c, y, xx);
  }
  return make(std::move(out), {a, b}, [a, b, Ca, Cb](Graph& g, int self) {
    const Tensor& gr = g.nodes_[self].grad;
    int B = gr.shape[0], H = gr.shape[2], W = gr.shape[3];
    if (g.nodes_[a].needs_grad) {
      Tensor& ga = g.grad_mut(a);
      for (int bi = 0; bi < B; ++bi)
        for (int c = 0; c < Ca; ++c)
          for (int y = 0; y < H; ++y)
            for (int xx = 0; xx < W; ++xx) ga.at(bi, c, y, xx) += gr.at(bi, c, y, xx);
    }
    if (g.nodes_[b].needs_grad) {
      Tensor& gb = g.grad_mut(b);
      for (int bi = 0; bi < B; ++bi)
        for (int c = 0; c < Cb; ++c)
          for (int y = 0; y < H; ++y)
            for (int xx = 0; xx < W; ++xx) gb.at(bi, c, y, xx) += gr.at(bi, Ca + c, y, xx);
    }
  });
}

int Graph::add_bc(int x, int v) {
  const Tensor& vx = nodes_[x].val;
  const Tensor& vv = nodes_[v].val;
  check_bchw(vx, "add_bc");
  if (vv.rank() != 2 || vv.shape[0] != vx.shape[0] || vv.shape[1] != vx.shape[1])
    throw std::invalid_argument("add_bc: expected (B,C) vector");
  int B = vx.shape[0], C = vx.shape[1], H = vx.shape[2], W = vx.shape[3];
  Tensor out(vx.shape);
  for (int bi = 0; bi < B; ++bi)
    for (int c = 0; c < C; ++c) {
      double add = vv.at(bi, c);
      for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx) out.at(bi, c, y, xx) = vx.at(bi, c, y, xx) + add;
    }
  return make(std::move(out), {x, v}, [x, v](Graph& g, int self) {
    const Tensor& gr = g.nodes_[self].grad;
    int B = gr.shape[0], C = gr.shape[1], H = gr.shape[2], W = gr.shape[3];
    if (g.nodes_[x].needs_grad) {
      Tensor& gx = g.grad_mut(x);
      for (size_t i = 0; i < gr.v.size(); ++i) gx.v[i] += gr.v[i];
    }
    if (g.nodes_[v].needs_grad) {
      Tensor& gv = g.grad_mut(v);
      for (int bi = 0; bi < B; ++bi)
        for (int c = 0; c < C; ++c) {
          double acc = 0.0;
          for (int y = 0; y < H; ++y)
            for (int xx = 0; xx < W; ++xx) acc += gr.at(bi, c, y, xx);
          gv.at(bi, c) += acc;
        }
    }
  });
}

// ---------------------------------------------------------------------------
// Token plumbing
// ---------------------------------------------------------------------------

int Graph::chw_to_tokens(int x) {
  const Tensor& vx = nodes_[x].val;
  check_bchw(vx, "chw_to_tokens");
  int B = vx.shape[0], C = vx.shape[1], H = vx.shape[2], W = vx.shape[3];
  Tensor out({B * H * W, C});
  size_t r = 0;
  for (int bi = 0; bi < B; ++bi)
    for (int y = 0; y < H; ++y)
      for (int xx = 0; xx < W; ++xx, ++r)
        for (int c = 0; c < C; ++c) out.v[r * C + c] = vx.at(bi, c, y, xx);
  return make(std::move(out), {x}, [x, B, C, H, W](Graph& g, int self) {
    const Tensor& gr = g.nodes_[self].grad;
    Tensor& gx = g.grad_mut(x);
    size_t r = 0;
    for (int bi = 0; bi < B; ++bi)
      for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx, ++r)
          for (int c = 0; c < C; ++c) gx.at(bi, c, y, xx) += gr.v[r * C + c];
  });
}

int Graph::tokens_to_chw(int x, int B, int C, int H, int W) {
  const Tensor& vx = nodes_[x].val;
  if (vx.rank() != 2 || vx.shape[0] != B * H * W || vx.shape[1] != C)
    throw std::invalid_argument("tokens_to_chw: shape mismatch");
  Tensor out({B, C, H, W});
  size_t r = 0;
  for (int bi = 0; bi < B; ++bi)
    for (int y = 0; y < H; ++y)
      for (int xx = 0; xx < W; ++xx, ++r)
        for (int c = 0; c < C; ++c) out.at(bi, c, y, xx) = vx.v[r * C + c];
  return make(std::move(out), {x}, [x, B, C, H, W](Graph& g, int self) {
    const Tensor& gr = g.nodes_[self].grad;
    Tensor& gx = g.grad_mut(x);
    size_t r = 0;
    for (int bi = 0; bi < B; ++bi)
      for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx, ++r)
          for (int c = 0; c < C; ++c) gx.v[r * C + c] += gr.at(bi, c, y, xx);
  });
}

int Graph::slice_rows(int x, int r0, int nrows) {
  const Tensor& vx = nodes_[x].val;
  if (vx.rank() != 2 || r0 < 0 || r0 + nrows > vx.shape[0])
    throw std::invalid_argument("slice_rows: range out of bounds");
  int D = vx.shape[1];
  Tensor out({nrows, D});
  std::copy(vx.v.begin() + static_cast<size_t>(r0) * D,
            vx.v.begin() + static_cast<size_t>(r0 + nrows) * D, out.v.begin());
  return make(std::move(out), {x}, [x, r0, nrows](Graph& g, int self) {
    const Tensor& gr = g.nodes_[self].grad;
    Tensor& gx = g.grad_mut(x);
    int D = gx.shape[1];
    for (size_t i = 0; i < gr.v.size(); ++i) gx.v[static_cast<size_t>(r0) * D + i] += gr.v[i];
  });
}

int Graph::concat_rows(const std::vector<int>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  int D = nodes_[parts[0]].val.shape[1];
  int N = 0;
  for (int p : parts) {
    const Tensor& t = nodes_[p].val;
    if (t.rank() != 2 || t.shape[1] != D)
      throw std::invalid_argument("concat_rows: column mismatch");
    N += t.shape[0];
  }
  Tensor out({N, D});
  size_t off = 0;
  for (int p : parts) {
    const Tensor& t = nodes_[p].val;
    std::copy(t.v.begin(), t.v.end(), out.v.begin() + off);
    off += t.v.size();
  }
  auto parts_copy = parts;
  return make(std::move(out), parts, [parts_copy](Graph& g, int self) {
    const Tensor& gr = g.nodes_[self].grad;
    size_t off = 0;
    for (int p : parts_copy) {
      size_t n = g.nodes_[p].val.v.size();
      if (g.nodes_[p].needs_grad) {
        Tensor& gp = g.grad_mut(p);
        for (size_t i = 0; i < n; ++i) gp.v[i] += gr.v[off + i];
      }
      off += n;
    }
  });
}

int Graph::add_rows_grouped(int x, int v, int rows_per_group) {
  const Tensor& vx = nodes_[x].val;
  const Tensor& vv = nodes_[v].val;
  if (vx.rank() != 2 || vv.rank() != 2 || vx.shape[1] != vv.shape[1] ||
      vx.shape[0] != vv.shape[0] * rows_per_group)
    throw std::invalid_argument("add_rows_grouped: shape mismatch");
  int D = vx.shape[1];
  Tensor out(vx.shape);
  for (int r = 0; r < vx.shape[0]; ++r) {
    int grp = r / rows_per_group;
    for (int j = 0; j < D; ++j)
      out.v[static_cast<size_t>(r) * D + j] =
          vx.v[static_cast<size_t>(r) * D + j] + vv.v[static_cast<size_t>(grp) * D + j];
  }
  return make(std::move(out), {x, v}, [x, v, rows_per_group](Graph& g, int self) {
    const Tensor& gr = g.nodes_[self].grad;
    int D = gr.shape[1];
    if (g.nodes_[x].needs_grad) {
      Tensor& gx = g.grad_mut(x);
      for (size_t i = 0; i < gr.v.size(); ++i) gx.v[i] += gr.v[i];
    }
    if (g.nodes_[v].needs_grad) {
      Tensor& gv = g.grad_mut(v);
      for (int r = 0; r < gr.shape[0]; ++r) {
        int grp = r / rows_per_group;
        for (int j = 0; j < D; ++j)
          gv.v[static_cast<size_t>(grp) * D + j] += gr.v[static_cast<size_t>(r) * D + j];
      }
    }
  });
}

int Graph::embed(int table, std::vector<int> idx) {
  const Tensor& vt = nodes_[table].val;
  if (vt.rank() != 2) throw std::invalid_argument("embed: table must be (K,D)");
  int K = vt.shape[0], D = vt.shape[1];
  for (int i : idx)
    if (i < 0 || i >= K) throw std::invalid_argument("embed: index out of range");
  Tensor out({static_cast<int>(idx.size()), D});
  for (size_t r = 0; r < idx.size(); ++r)
    std::copy(vt.v.begin() + static_cast<size_t>(idx[r]) * D,
              vt.v.begin() + static_cast<size_t>(idx[r] + 1) * D, out.v.begin() + r * D);
  auto idx_copy = std::make_shared<std::vector<int>>(std::move(idx));
  return make(std::move(out), {table}, [table, idx_copy](Graph& g, int self) {
    const Tensor& gr = g.nodes_[self].grad;
    Tensor& gt = g.grad_mut(table);
    int D = gt.shape[1];
    for (size_t r = 0; r < idx_copy->size(); ++r)
      for (int j = 0; j < D; ++j)
        gt.v[static_cast<size_t>((*idx_copy)[r]) * D + j] += gr.v[r * D + j];
  });
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

int Graph::mse_loss(int pred, Tensor target) {
  const Tensor& vp = nodes_[pred].val;
  require_same_shape(vp, target, "mse_loss");
  double acc = 0.0;
  for (size_t i = 0; i < vp.v.size(); ++i) {
    double d = vp.v[i] - target.v[i];
    acc += d * d;
  }
  Tensor out({1});
  out.v[0] = acc / static_cast<double>(vp.v.size());
  auto tgt = std::make_shared<Tensor>(std::move(target));
  return make(std::move(out), {pred}, [pred, tgt](Graph& g, int self) {
    double gs = g.nodes_[self].grad.v[0];
    const Tensor& vp = g.nodes_[pred].val;
    Tensor& gp = g.grad_mut(pred);
    double c = 2.0 * gs / static_cast<double>(vp.v.size());
    for (size_t i = 0; i < vp.v.size(); ++i) gp.v[i] += c * (vp.v[i] - tgt->v[i]);
  });
}

int Graph::softmax_ce_loss(int logits, std::vector<int> targets) {
  const Tensor& vl = nodes_[logits].val;
  if (vl.rank() != 2 || vl.shape[0] != static_cast<int>(targets.size()))
    throw std::invalid_argument("softmax_ce_loss: shape mismatch");
  int N = vl.shape[0], K = vl.shape[1];
  auto probs = std::make_shared<Tensor>(vl.shape);
  double loss = 0.0;
  for (int i = 0; i < N; ++i) {
    const double* row = &vl.v[static_cast<size_t>(i) * K];
    double m = row[0];
    for (int j = 1; j < K; ++j) m = std::max(m, row[j]);
    double s = 0.0;
    double* prow = &probs->v[static_cast<size_t>(i) * K];
    for (int j = 0; j < K; ++j) {
      prow[j] = std::exp(row[j] - m);
      s += prow[j];
    }
    for (int j = 0; j < K; ++j) prow[j] /= s;
    int t = targets[i];
    if (t < 0 || t >= K) throw std::invalid_argument("softmax_ce_loss: bad target");
    loss -= std::log(std::max(prow[t], 1e-300));
  }
  Tensor out({1});
  out.v[0] = loss / N;
  auto tgt = std::make_shared<std::vector<int>>(std::move(targets));
  return make(std::move(out), {logits}, [logits, probs, tgt](Graph& g, int self) {
    double gs = g.nodes_[self].grad.v[0];
    Tensor& gl = g.grad_mut(logits);
    int N = probs->shape[0], K = probs->shape[1];
    double c = gs / N;
    for (int i = 0; i < N; ++i) {
      for (int j = 0; j < K; ++j)
        gl.v[static_cast<size_t>(i) * K + j] += c * probs->v[static_cast<size_t>(i) * K + j];
      gl.v[static_cast<size_t>(i) * K + (*tgt)[i]] -= c;
    }
  });
}

int Graph::weighted_sum(int x, Tensor weights) {
  const Tensor& vx = nodes_[x].val;
  require_same_shape(vx, weights, "weighted_sum");
  double acc = 0.0;
  for (size_t i = 0; i < vx.v.size(); ++i) acc += vx.v[i] * weights.v[i];
  Tensor out({1});
  out.v[0] = acc;
  auto wts = std::make_shared<Tensor>(std::move(weights));
  return make(std::move(out), {x}, [x, wts](Graph& g, int self) {
    double gs = g.nodes_[self].grad.v[0];
    Tensor& gx = g.grad_mut(x);
    for (size_t i = 0; i < gx.v.size(); ++i) gx.v[i] += gs * wts->v[i];
  });
}

}  // namespace textsr
