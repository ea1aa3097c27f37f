#include "textsr/networks.hpp"

#include <cmath>
#include <stdexcept>

namespace textsr {

namespace {

// Tile a (L,D) node B times into (B*L,D).
int tile_rows(Graph& g, int x, int B) {
  if (B == 1) return x;
  std::vector<int> parts(B, x);
  return g.concat_rows(parts);
}

std::vector<int> flatten_seq(const CharSequence& c) { return c; }

}  // namespace

// ---------------------------------------------------------------------------
// IdmUnet
// ---------------------------------------------------------------------------

void IdmUnet::init(ParameterStore& s, Rng& rng, bool rand_head) const {
  int C = cfg.idm_channels, Zc = cfg.latent_channels(), td = cfg.time_dim;
  init_time_mlp(s, prefix + ".tmlp", td, td, rng);
  init_conv(s, prefix + ".in", 2 * Zc, C, 3, rng);
  init_resblock(s, prefix + ".d0", C, C, td, rng);
  init_attention(s, prefix + ".a0", C, cfg.cond_dim, rng);
  init_resblock(s, prefix + ".d1", C, 2 * C, td, rng);
  init_attention(s, prefix + ".a1", 2 * C, cfg.cond_dim, rng);
  init_resblock(s, prefix + ".mid", 2 * C, 2 * C, td, rng);
  init_resblock(s, prefix + ".u0", 3 * C, C, td, rng);
  init_attention(s, prefix + ".a2", C, cfg.cond_dim, rng);
  init_norm(s, prefix + ".outn", C);
  init_conv(s, prefix + ".out", C, Zc, 3, rng, /*zero=*/!rand_head);
}

int IdmUnet::forward(Graph& g, Binder& b, int z_t, int z_lr, int ccond,
                     const std::vector<int>& t) const {
  const Tensor& vz = g.val(z_t);
  int B = vz.shape[0], h = vz.shape[2], w = vz.shape[3];
  int C = cfg.idm_channels, L = cfg.seq_slots;

  int temb = time_mlp_fwd(g, b, prefix + ".tmlp", g.constant(time_embedding(t, cfg.time_dim)));
  int x = conv_fwd(g, b, prefix + ".in", g.concat_ch(z_t, z_lr), 3);

  int d0 = resblock_fwd(g, b, prefix + ".d0", x, temb, C, C);
  {
    int tok = g.chw_to_tokens(d0);
    tok = attention_fwd(g, b, prefix + ".a0", tok, B, h * w, ccond, L, C);
    d0 = g.tokens_to_chw(tok, B, C, h, w);
  }
  int d1 = resblock_fwd(g, b, prefix + ".d1", g.avgpool_hw(d0, 2, 2), temb, C, 2 * C);
  {
    int tok = g.chw_to_tokens(d1);
    tok = attention_fwd(g, b, prefix + ".a1", tok, B, (h / 2) * (w / 2), ccond, L, 2 * C);
    d1 = g.tokens_to_chw(tok, B, 2 * C, h / 2, w / 2);
  }
  int mid = resblock_fwd(g, b, prefix + ".mid", d1, temb, 2 * C, 2 * C);
  int u = g.concat_ch(g.upsample2(mid), d0);
  u = resblock_fwd(g, b, prefix + ".u0", u, temb, 3 * C, C);
  {
    int tok = g.chw_to_tokens(u);
    tok = attention_fwd(g, b, prefix + ".a2", tok, B, h * w, ccond, L, C);
    u = g.tokens_to_chw(tok, B, C, h, w);
  }
  int out = g.silu(chan_norm_fwd(g, b, prefix + ".outn", u));
  return conv_fwd(g, b, prefix + ".out", out, 3);
}

// ---------------------------------------------------------------------------
// TdmDecoder
// ---------------------------------------------------------------------------

void TdmDecoder::init(ParameterStore& s, Rng& rng, bool rand_head) const {
  int D = cfg.tdm_dim, K = cfg.alphabet_size, L = cfg.seq_slots;
  double sc = he_scale(D);
  s.create(prefix + ".emb", {K, D}, [sc](Rng& r) { return sc * normal01(r); }, rng);
  s.create(prefix + ".pos", {L, D}, [sc](Rng& r) { return sc * normal01(r); }, rng);
  init_time_mlp(s, prefix + ".tmlp", cfg.time_dim, D, rng);
  for (int i = 0; i < cfg.tdm_blocks; ++i) {
    std::string bp = prefix + ".blk" + std::to_string(i);
    init_attention(s, bp + ".self", D, D, rng);
    init_attention(s, bp + ".cross", D, cfg.icond_dim, rng);
    init_ffn(s, bp + ".ffn", D, 2 * D, rng);
  }
  init_norm(s, prefix + ".outn", D);
  init_linear(s, prefix + ".head", D, K, rng, /*zero=*/!rand_head);
}

int TdmDecoder::forward(Graph& g, Binder& b, const std::vector<int>& c_t_flat, int icond,
                        int icond_len, const std::vector<int>& t, int B) const {
  int D = cfg.tdm_dim, L = cfg.seq_slots;
  if (static_cast<int>(c_t_flat.size()) != B * L)
    throw std::invalid_argument("TdmDecoder: c_t length mismatch");
  int tok = g.embed(b(prefix + ".emb"), c_t_flat);
  tok = g.add(tok, tile_rows(g, b(prefix + ".pos"), B));
  int temb = time_mlp_fwd(g, b, prefix + ".tmlp", g.constant(time_embedding(t, cfg.time_dim)));
  tok = g.add_rows_grouped(tok, temb, L);
  for (int i = 0; i < cfg.tdm_blocks; ++i) {
    std::string bp = prefix + ".blk" + std::to_string(i);
    tok = attention_fwd(g, b, bp + ".self", tok, B, L, tok, L, D);
    tok = attention_fwd(g, b, bp + ".cross", tok, B, L, icond, icond_len, D);
    tok = ffn_fwd(g, b, bp + ".ffn", tok);
  }
  tok = row_norm_fwd(g, b, prefix + ".outn", tok);
  return linear_fwd(g, b, prefix + ".head", tok);
}

// ---------------------------------------------------------------------------
// MomModule
// ---------------------------------------------------------------------------

void MomModule::init(ParameterStore& s, Rng& rng, bool rand_head) const {
  int Cm = cfg.mom_channels, Zc = cfg.latent_channels(), td = cfg.time_dim;
  int Dc = cfg.cond_dim, K = cfg.alphabet_size, L = cfg.seq_slots;
  double sc = he_scale(Dc);
  init_time_mlp(s, prefix + ".tmlp", td, td, rng);
  // Image side.
  s.create(prefix + ".iemb", {K, Dc}, [sc](Rng& r) { return sc * normal01(r); }, rng);
  init_conv(s, prefix + ".in", 2 * Zc, Cm, 3, rng);
  init_resblock(s, prefix + ".r0", Cm, Cm, td, rng);
  init_attention(s, prefix + ".ia0", Cm, Dc, rng);
  init_resblock(s, prefix + ".r1", Cm, 2 * Cm, td, rng);
  init_attention(s, prefix + ".ia1", 2 * Cm, Dc, rng);
  init_linear(s, prefix + ".ihead", 2 * Cm, cfg.icond_dim, rng, /*zero=*/!rand_head);
  // Text side.
  s.create(prefix + ".cemb", {K, Dc}, [sc](Rng& r) { return sc * normal01(r); }, rng);
  s.create(prefix + ".cpos", {L, Dc}, [sc](Rng& r) { return sc * normal01(r); }, rng);
  init_linear(s, prefix + ".ctime", td, Dc, rng);
  init_attention(s, prefix + ".cself", Dc, Dc, rng);
  init_ffn(s, prefix + ".cffn", Dc, 2 * Dc, rng);
  init_norm(s, prefix + ".coutn", Dc);
  init_linear(s, prefix + ".chead", Dc, Dc, rng, /*zero=*/!rand_head);
}

MomModule::Out MomModule::forward(Graph& g, Binder& b, int z_lr, int z_t,
                                  const std::vector<int>& c_t_flat, const std::vector<int>& t,
                                  int B) const {
  int Cm = cfg.mom_channels, L = cfg.seq_slots, Dc = cfg.cond_dim;
  const Tensor& vz = g.val(z_t);
  int h = vz.shape[2], w = vz.shape[3];
  if (static_cast<int>(c_t_flat.size()) != B * L)
    throw std::invalid_argument("MomModule: c_t length mismatch");

  int temb = time_mlp_fwd(g, b, prefix + ".tmlp", g.constant(time_embedding(t, cfg.time_dim)));
  int cemb_tokens = g.embed(b(prefix + ".iemb"), c_t_flat);

  int x = conv_fwd(g, b, prefix + ".in", g.concat_ch(z_lr, z_t), 3);
  x = resblock_fwd(g, b, prefix + ".r0", x, temb, Cm, Cm);
  {
    int tok = g.chw_to_tokens(x);
    tok = attention_fwd(g, b, prefix + ".ia0", tok, B, h * w, cemb_tokens, L, Cm);
    x = g.tokens_to_chw(tok, B, Cm, h, w);
  }
  x = resblock_fwd(g, b, prefix + ".r1", g.avgpool_hw(x, 2, 2), temb, Cm, 2 * Cm);
  {
    int tok = g.chw_to_tokens(x);
    tok = attention_fwd(g, b, prefix + ".ia1", tok, B, (h / 2) * (w / 2), cemb_tokens, L, 2 * Cm);
    x = g.tokens_to_chw(tok, B, 2 * Cm, h / 2, w / 2);
  }
  int icond = linear_fwd(g, b, prefix + ".ihead", g.chw_to_tokens(x));

  int ctok = g.embed(b(prefix + ".cemb"), c_t_flat);
  ctok = g.add(ctok, B == 1 ? b(prefix + ".cpos") : g.concat_rows(std::vector<int>(B, b(prefix + ".cpos"))));
  ctok = g.add_rows_grouped(ctok, linear_fwd(g, b, prefix + ".ctime", temb), L);
  ctok = attention_fwd(g, b, prefix + ".cself", ctok, B, L, ctok, L, Dc);
  ctok = ffn_fwd(g, b, prefix + ".cffn", ctok);
  ctok = row_norm_fwd(g, b, prefix + ".coutn", ctok);
  int ccond = linear_fwd(g, b, prefix + ".chead", ctok);
  return {icond, ccond};
}

// ---------------------------------------------------------------------------
// Recognizer
// ---------------------------------------------------------------------------

void Recognizer::init(ParameterStore& s, Rng& rng, bool rand_head) const {
  init_conv(s, prefix + ".c1", 3, cfg.rec_c1, 3, rng);
  init_norm(s, prefix + ".n1", cfg.rec_c1);
  init_conv(s, prefix + ".c2", cfg.rec_c1, cfg.rec_c2, 3, rng);
  init_norm(s, prefix + ".n2", cfg.rec_c2);
  init_conv(s, prefix + ".c3", cfg.rec_c2, cfg.rec_c3, 3, rng);
  init_norm(s, prefix + ".n3", cfg.rec_c3);
  init_linear(s, prefix + ".head", cfg.rec_c3, cfg.alphabet_size, rng, /*zero=*/!rand_head);
}

int Recognizer::forward(Graph& g, Binder& b, int img) const {
  const Tensor& vi = g.val(img);
  int B = vi.shape[0];
  int x = g.silu(chan_norm_fwd(g, b, prefix + ".n1", conv_fwd(g, b, prefix + ".c1", img, 3)));
  x = g.avgpool_hw(x, 2, 2);
  x = g.silu(chan_norm_fwd(g, b, prefix + ".n2", conv_fwd(g, b, prefix + ".c2", x, 3)));
  x = g.avgpool_hw(x, 2, 2);
  x = g.silu(chan_norm_fwd(g, b, prefix + ".n3", conv_fwd(g, b, prefix + ".c3", x, 3)));
  x = g.avgpool_hw(x, 2, 2);
  const Tensor& vx = g.val(x);
  int hh = vx.shape[2], ww = vx.shape[3];
  if (ww % cfg.seq_slots != 0)
    throw std::invalid_argument("Recognizer: width does not divide into slots");
  x = g.avgpool_hw(x, hh, ww / cfg.seq_slots);  // (B, C, 1, slots)
  int tok = g.chw_to_tokens(x);                 // (B*slots, C)
  (void)B;
  return linear_fwd(g, b, prefix + ".head", tok);
}

// ---------------------------------------------------------------------------
// TextPriorEncoder
// ---------------------------------------------------------------------------

void TextPriorEncoder::init(ParameterStore& s, Rng& rng) const {
  int Dc = cfg.cond_dim, K = cfg.alphabet_size, L = cfg.seq_slots;
  double sc = he_scale(Dc);
  s.create(prefix + ".emb", {K, Dc}, [sc](Rng& r) { return sc * normal01(r); }, rng);
  s.create(prefix + ".pos", {L, Dc}, [sc](Rng& r) { return sc * normal01(r); }, rng);
  init_attention(s, prefix + ".self", Dc, Dc, rng);
  init_ffn(s, prefix + ".ffn", Dc, 2 * Dc, rng);
  init_norm(s, prefix + ".outn", Dc);
}

int TextPriorEncoder::forward(Graph& g, Binder& b, const std::vector<int>& c_flat, int B) const {
  int Dc = cfg.cond_dim, L = cfg.seq_slots;
  if (static_cast<int>(c_flat.size()) != B * L)
    throw std::invalid_argument("TextPriorEncoder: sequence length mismatch");
  int tok = g.embed(b(prefix + ".emb"), c_flat);
  tok = g.add(tok, tile_rows(g, b(prefix + ".pos"), B));
  tok = attention_fwd(g, b, prefix + ".self", tok, B, L, tok, L, Dc);
  tok = ffn_fwd(g, b, prefix + ".ffn", tok);
  return row_norm_fwd(g, b, prefix + ".outn", tok);
}

// ---------------------------------------------------------------------------
// LrCondEncoder
// ---------------------------------------------------------------------------

void LrCondEncoder::init(ParameterStore& s, Rng& rng) const {
  int Cm = cfg.mom_channels, Zc = cfg.latent_channels();
  init_conv(s, prefix + ".c1", Zc, Cm, 3, rng);
  init_norm(s, prefix + ".n1", Cm);
  init_conv(s, prefix + ".c2", Cm, 2 * Cm, 3, rng);
  init_norm(s, prefix + ".n2", 2 * Cm);
  init_linear(s, prefix + ".head", 2 * Cm, cfg.icond_dim, rng);
}

int LrCondEncoder::forward(Graph& g, Binder& b, int z_lr) const {
  int x = g.silu(chan_norm_fwd(g, b, prefix + ".n1", conv_fwd(g, b, prefix + ".c1", z_lr, 3)));
  x = g.avgpool_hw(x, 2, 2);
  x = g.silu(chan_norm_fwd(g, b, prefix + ".n2", conv_fwd(g, b, prefix + ".c2", x, 3)));
  return linear_fwd(g, b, prefix + ".head", g.chw_to_tokens(x));
}

// ---------------------------------------------------------------------------
// Single-sample wrappers
// ---------------------------------------------------------------------------

namespace {

Tensor with_batch_dim(const Tensor& t) {
  std::vector<int> s = t.shape;
  s.insert(s.begin(), 1);
  Tensor out = t;
  out.shape = s;
  return out;
}

Tensor drop_batch_dim(const Tensor& t) {
  Tensor out = t;
  out.shape.erase(out.shape.begin());
  return out;
}

}  // namespace

Tensor idm_denoise(const Tensor& z_t, const Tensor& z_lr, const Tensor& ccond, int t,
                   const IdmUnet& net, ParameterStore& store) {
  require_same_shape(z_t, z_lr, "idm_denoise");
  if (ccond.rank() != 2 || ccond.shape[0] != net.cfg.seq_slots ||
      ccond.shape[1] != net.cfg.cond_dim)
    throw std::invalid_argument("idm_denoise: ccond dims mismatch");
  Graph g;
  Binder b(g, store, /*trainable=*/false);
  int zt = g.constant(with_batch_dim(z_t));
  int zlr = g.constant(with_batch_dim(z_lr));
  int cc = g.constant(ccond);
  int out = net.forward(g, b, zt, zlr, cc, {t});
  return drop_batch_dim(g.val(out));
}

CategoricalDistribution tdm_denoise(const CharSequence& c_t, const Tensor& icond, int t,
                                    const TdmDecoder& net, ParameterStore& store) {
  if (icond.rank() != 2 || icond.shape[1] != net.cfg.icond_dim)
    throw std::invalid_argument("tdm_denoise: icond dims mismatch");
  Graph g;
  Binder b(g, store, false);
  int ic = g.constant(icond);
  int logits = net.forward(g, b, c_t, ic, icond.shape[0], {t}, 1);
  return softmax_distribution(g.val(logits));
}

std::pair<Tensor, Tensor> mom_forward(const Tensor& z_lr, const Tensor& z_t,
                                      const CharSequence& c_t, int t, const MomModule& net,
                                      ParameterStore& store) {
  Graph g;
  Binder b(g, store, false);
  int zlr = g.constant(with_batch_dim(z_lr));
  int zt = g.constant(with_batch_dim(z_t));
  auto out = net.forward(g, b, zlr, zt, flatten_seq(c_t), {t}, 1);
  return {g.val(out.icond), g.val(out.ccond)};
}

CharSequence recognize(const Tensor& x_hr_grid, const Recognizer& net, ParameterStore& store) {
  Graph g;
  Binder b(g, store, false);
  int img = g.constant(with_batch_dim(x_hr_grid));
  int logits = net.forward(g, b, img);
  const Tensor& lg = g.val(logits);
  int K = net.cfg.alphabet_size, pad = K - 1;
  CharSequence out(net.cfg.seq_slots);
  bool after_pad = false;
  for (int i = 0; i < net.cfg.seq_slots; ++i) {
    int best = 0;
    for (int k = 1; k < K; ++k)
      if (lg.at(i, k) > lg.at(i, best)) best = k;
    if (best == pad) after_pad = true;
    out[i] = after_pad ? pad : best;
  }
  return out;
}

Tensor text_prior_encode(const CharSequence& c, const TextPriorEncoder& net,
                         ParameterStore& store) {
  Graph g;
  Binder b(g, store, false);
  return g.val(net.forward(g, b, c, 1));
}

CategoricalDistribution softmax_distribution(const Tensor& logits) {
  if (logits.rank() != 2) throw std::invalid_argument("softmax_distribution: expected (L,K)");
  CategoricalDistribution d(logits.shape[0], logits.shape[1]);
  for (int i = 0; i < d.L; ++i) {
    double m = logits.at(i, 0);
    for (int k = 1; k < d.K; ++k) m = std::max(m, logits.at(i, k));
    double s = 0.0;
    for (int k = 0; k < d.K; ++k) {
      d.at(i, k) = std::exp(logits.at(i, k) - m);
      s += d.at(i, k);
    }
    for (int k = 0; k < d.K; ++k) d.at(i, k) /= s;
  }
  return d;
}

}  // namespace textsr
