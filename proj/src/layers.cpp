#include "textsr/layers.hpp"

#include <cmath>

namespace textsr {

double he_scale(int fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

Tensor time_embedding(const std::vector<int>& t, int dim) {
  if (dim % 2 != 0) throw std::invalid_argument("time_embedding: dim must be even");
  int half = dim / 2;
  Tensor out({static_cast<int>(t.size()), dim});
  double denom = half > 1 ? half - 1 : 1;
  for (size_t i = 0; i < t.size(); ++i) {
    for (int j = 0; j < half; ++j) {
      double freq = std::exp(-std::log(10000.0) * j / denom);
      double arg = t[i] * freq;
      out.at(static_cast<int>(i), j) = std::sin(arg);
      out.at(static_cast<int>(i), half + j) = std::cos(arg);
    }
  }
  return out;
}

void init_linear(ParameterStore& s, const std::string& p, int din, int dout, Rng& rng,
                 bool zero, bool bias) {
  if (zero) {
    s.create_zeros(p + ".w", {din, dout});
  } else {
    double sc = he_scale(din);
    s.create(p + ".w", {din, dout}, [sc](Rng& r) { return sc * normal01(r); }, rng);
  }
  if (bias) s.create_zeros(p + ".b", {dout});
}

int linear_fwd(Graph& g, Binder& b, const std::string& p, int x, bool bias) {
  return g.linear(x, b(p + ".w"), bias ? b(p + ".b") : -1);
}

void init_conv(ParameterStore& s, const std::string& p, int cin, int cout, int k, Rng& rng,
               bool zero) {
  if (zero) {
    s.create_zeros(p + ".w", {cout, cin, k, k});
  } else {
    double sc = he_scale(cin * k * k);
    s.create(p + ".w", {cout, cin, k, k}, [sc](Rng& r) { return sc * normal01(r); }, rng);
  }
  s.create_zeros(p + ".b", {cout});
}

int conv_fwd(Graph& g, Binder& b, const std::string& p, int x, int k) {
  return g.conv2d(x, b(p + ".w"), b(p + ".b"), k);
}

void init_norm(ParameterStore& s, const std::string& p, int dim) {
  s.create_const(p + ".gain", {dim}, 1.0);
  s.create_zeros(p + ".bias", {dim});
}

int chan_norm_fwd(Graph& g, Binder& b, const std::string& p, int x) {
  return g.chan_layernorm(x, b(p + ".gain"), b(p + ".bias"));
}

int row_norm_fwd(Graph& g, Binder& b, const std::string& p, int x) {
  return g.row_layernorm(x, b(p + ".gain"), b(p + ".bias"));
}

void init_time_mlp(ParameterStore& s, const std::string& p, int dim_in, int dim_out, Rng& rng) {
  init_linear(s, p + ".l1", dim_in, dim_out, rng);
  init_linear(s, p + ".l2", dim_out, dim_out, rng);
}

int time_mlp_fwd(Graph& g, Binder& b, const std::string& p, int temb) {
  int h = linear_fwd(g, b, p + ".l1", temb);
  return linear_fwd(g, b, p + ".l2", g.silu(h));
}

void init_resblock(ParameterStore& s, const std::string& p, int cin, int cout, int tdim,
                   Rng& rng) {
  init_norm(s, p + ".n1", cin);
  init_conv(s, p + ".c1", cin, cout, 3, rng);
  init_linear(s, p + ".temb", tdim, cout, rng);
  init_norm(s, p + ".n2", cout);
  init_conv(s, p + ".c2", cout, cout, 3, rng);
  if (cin != cout) init_conv(s, p + ".skip", cin, cout, 1, rng);
}

int resblock_fwd(Graph& g, Binder& b, const std::string& p, int x, int temb, int cin, int cout) {
  int h = chan_norm_fwd(g, b, p + ".n1", x);
  h = conv_fwd(g, b, p + ".c1", g.silu(h), 3);
  h = g.add_bc(h, linear_fwd(g, b, p + ".temb", temb));
  h = chan_norm_fwd(g, b, p + ".n2", h);
  h = conv_fwd(g, b, p + ".c2", g.silu(h), 3);
  int skip = cin == cout ? x : conv_fwd(g, b, p + ".skip", x, 1);
  return g.add(skip, h);
}

void init_attention(ParameterStore& s, const std::string& p, int c, int dc, Rng& rng,
                    bool zero_out) {
  init_norm(s, p + ".norm", c);
  init_linear(s, p + ".q", c, c, rng);
  init_linear(s, p + ".k", dc, c, rng, false, /*bias=*/false);
  init_linear(s, p + ".v", dc, c, rng, false, /*bias=*/false);
  init_linear(s, p + ".o", c, c, rng, zero_out);
}

int attention_fwd(Graph& g, Binder& b, const std::string& p, int x_tokens, int B, int N,
                  int cond_tokens, int M, int c) {
  int xn = row_norm_fwd(g, b, p + ".norm", x_tokens);
  int q = linear_fwd(g, b, p + ".q", xn);
  int k = linear_fwd(g, b, p + ".k", cond_tokens, /*bias=*/false);
  int v = linear_fwd(g, b, p + ".v", cond_tokens, /*bias=*/false);
  double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(c));
  std::vector<int> outs;
  outs.reserve(B);
  for (int bi = 0; bi < B; ++bi) {
    int qb = g.slice_rows(q, bi * N, N);
    int kb = g.slice_rows(k, bi * M, M);
    int vb = g.slice_rows(v, bi * M, M);
    int scores = g.scale(g.matmul_nt(qb, kb), inv_sqrt);
    outs.push_back(g.matmul(g.softmax_rows(scores), vb));
  }
  int attn = B == 1 ? outs[0] : g.concat_rows(outs);
  return g.add(x_tokens, linear_fwd(g, b, p + ".o", attn));
}

void init_ffn(ParameterStore& s, const std::string& p, int dim, int hidden, Rng& rng) {
  init_norm(s, p + ".norm", dim);
  init_linear(s, p + ".l1", dim, hidden, rng);
  init_linear(s, p + ".l2", hidden, dim, rng);
}

int ffn_fwd(Graph& g, Binder& b, const std::string& p, int x) {
  int h = row_norm_fwd(g, b, p + ".norm", x);
  h = linear_fwd(g, b, p + ".l2", g.silu(linear_fwd(g, b, p + ".l1", h)));
  return g.add(x, h);
}

}  // namespace textsr
