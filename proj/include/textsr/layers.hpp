#pragma once

#include <string>
#include <vector>

#include "textsr/autograd.hpp"
#include "textsr/params.hpp"

namespace textsr {

// Shared building blocks. Each init_* registers parameters under a prefix;
// the matching forward composes graph ops through a Binder bound to the same
// store. Output heads can be zero-initialized for stable early training.

double he_scale(int fan_in);

// Sinusoidal embedding of integer steps t in 1..T; shape (B, dim).
Tensor time_embedding(const std::vector<int>& t, int dim);

void init_linear(ParameterStore& s, const std::string& p, int din, int dout, Rng& rng,
                 bool zero = false, bool bias = true);
int linear_fwd(Graph& g, Binder& b, const std::string& p, int x, bool bias = true);

void init_conv(ParameterStore& s, const std::string& p, int cin, int cout, int k, Rng& rng,
               bool zero = false);
int conv_fwd(Graph& g, Binder& b, const std::string& p, int x, int k);

void init_norm(ParameterStore& s, const std::string& p, int dim);
int chan_norm_fwd(Graph& g, Binder& b, const std::string& p, int x);
int row_norm_fwd(Graph& g, Binder& b, const std::string& p, int x);

// Two-layer MLP lifting a sinusoidal embedding into conditioning space.
void init_time_mlp(ParameterStore& s, const std::string& p, int dim_in, int dim_out, Rng& rng);
int time_mlp_fwd(Graph& g, Binder& b, const std::string& p, int temb);

// Pre-norm residual conv block with per-block time injection:
//   h = conv3(silu(norm(x))) + proj(temb); h = conv3(silu(norm(h)));
//   out = h + skip(x)
void init_resblock(ParameterStore& s, const std::string& p, int cin, int cout, int tdim,
                   Rng& rng);
int resblock_fwd(Graph& g, Binder& b, const std::string& p, int x, int temb, int cin, int cout);

// Single-head attention over grouped token rows. x is (B*N, C) and cond is
// (B*M, Dc); K/V projections are bias-free so an all-zero cond contributes
// exactly zero. Returns x + Wo(attn) with pre-norm on x.
void init_attention(ParameterStore& s, const std::string& p, int c, int dc, Rng& rng,
                    bool zero_out = false);
int attention_fwd(Graph& g, Binder& b, const std::string& p, int x_tokens, int B, int N,
                  int cond_tokens, int M, int c);

// Pre-norm feed-forward block: x + W2(silu(W1(norm(x)))).
void init_ffn(ParameterStore& s, const std::string& p, int dim, int hidden, Rng& rng);
int ffn_fwd(Graph& g, Binder& b, const std::string& p, int x);

}  // namespace textsr
