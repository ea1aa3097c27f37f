#include <doctest.h>

#include <cmath>
#include <functional>

#include "textsr/gradcheck.hpp"
#include "textsr/layers.hpp"

using namespace textsr;

namespace {

// Checks every coordinate of every named parameter against central
// differences through the given graph builder.
void check_all(ParameterStore& store, const std::vector<std::string>& names,
               const std::function<int(Graph&, Binder&)>& build, double tol = 1e-4) {
  auto eval = [&](ParameterStore& s, std::map<std::string, Tensor>* grads) {
    Graph g;
    Binder b(g, s);
    int loss = build(g, b);
    double value = g.val(loss).v[0];
    if (grads) {
      g.backward(loss);
      *grads = b.collect_grads();
    }
    return value;
  };
  long long total = 0;
  for (const auto& n : names) total += store.get(n).numel();
  Rng rng(7);
  GradCheckResult r = gradcheck(store, names, eval, static_cast<int>(std::min<long long>(total, 200)),
                                1e-5, tol, rng);
  INFO(r.worst);
  CHECK(r.pass);
}

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& x : t.v) x = scale * normal01(rng);
  return t;
}

}  // namespace

TEST_SUITE("autograd") {

TEST_CASE("elementwise ops") {
  Rng rng(1);
  ParameterStore store;
  store.create("a", {3, 4}, [](Rng& r) { return normal01(r); }, rng);
  store.create("b", {3, 4}, [](Rng& r) { return normal01(r); }, rng);
  Tensor w = random_tensor({3, 4}, rng);
  check_all(store, {"a", "b"}, [&](Graph& g, Binder& bd) {
    int a = bd("a"), b = bd("b");
    int y = g.add(g.mul(a, b), g.scale(g.sub(a, b), 0.7));
    y = g.silu(y);
    return g.weighted_sum(y, w);
  });
}

TEST_CASE("matmul family") {
  Rng rng(2);
  ParameterStore store;
  store.create("A", {4, 3}, [](Rng& r) { return normal01(r); }, rng);
  store.create("B", {3, 5}, [](Rng& r) { return normal01(r); }, rng);
  store.create("C", {6, 5}, [](Rng& r) { return normal01(r); }, rng);
  store.create("bias", {6}, [](Rng& r) { return normal01(r); }, rng);
  Tensor w = random_tensor({4, 6}, rng);
  check_all(store, {"A", "B", "C", "bias"}, [&](Graph& g, Binder& bd) {
    int ab = g.matmul(bd("A"), bd("B"));          // (4,5)
    int y = g.matmul_nt(ab, bd("C"));             // (4,6)
    y = g.linear(y, g.constant(Tensor({6, 6}, 0.1)), bd("bias"));
    return g.weighted_sum(y, w);
  });
}

TEST_CASE("softmax and layernorm") {
  Rng rng(3);
  ParameterStore store;
  store.create("x", {5, 7}, [](Rng& r) { return normal01(r); }, rng);
  store.create("gain", {7}, [](Rng& r) { return 1.0 + 0.1 * normal01(r); }, rng);
  store.create("bias", {7}, [](Rng& r) { return 0.1 * normal01(r); }, rng);
  Tensor w = random_tensor({5, 7}, rng);
  check_all(store, {"x", "gain", "bias"}, [&](Graph& g, Binder& bd) {
    int y = g.row_layernorm(bd("x"), bd("gain"), bd("bias"));
    y = g.softmax_rows(y);
    return g.weighted_sum(y, w);
  });
}

TEST_CASE("conv2d and channel norm") {
  Rng rng(4);
  ParameterStore store;
  store.create("x", {2, 3, 4, 6}, [](Rng& r) { return normal01(r); }, rng);
  store.create("w3", {5, 3, 3, 3}, [](Rng& r) { return 0.3 * normal01(r); }, rng);
  store.create("b3", {5}, [](Rng& r) { return 0.1 * normal01(r); }, rng);
  store.create("w1", {4, 5, 1, 1}, [](Rng& r) { return 0.3 * normal01(r); }, rng);
  store.create("b1", {4}, [](Rng& r) { return 0.1 * normal01(r); }, rng);
  store.create("gain", {5}, [](Rng& r) { return 1.0 + 0.1 * normal01(r); }, rng);
  store.create("bias", {5}, [](Rng& r) { return 0.1 * normal01(r); }, rng);
  Tensor w = random_tensor({2, 4, 4, 6}, rng);
  check_all(store, {"x", "w3", "b3", "w1", "b1", "gain", "bias"}, [&](Graph& g, Binder& bd) {
    int y = g.conv2d(bd("x"), bd("w3"), bd("b3"), 3);
    y = g.chan_layernorm(y, bd("gain"), bd("bias"));
    y = g.silu(y);
    y = g.conv2d(y, bd("w1"), bd("b1"), 1);
    return g.weighted_sum(y, w);
  });
}

TEST_CASE("pooling upsampling concat and broadcast") {
  Rng rng(5);
  ParameterStore store;
  store.create("x", {2, 3, 4, 4}, [](Rng& r) { return normal01(r); }, rng);
  store.create("y", {2, 2, 4, 4}, [](Rng& r) { return normal01(r); }, rng);
  store.create("v", {2, 5}, [](Rng& r) { return normal01(r); }, rng);
  Tensor w = random_tensor({2, 5, 4, 4}, rng);
  check_all(store, {"x", "y", "v"}, [&](Graph& g, Binder& bd) {
    int cat = g.concat_ch(bd("x"), bd("y"));  // (2,5,4,4)
    int down = g.avgpool_hw(cat, 2, 2);
    int up = g.upsample2(down);
    int out = g.add_bc(up, bd("v"));
    return g.weighted_sum(out, w);
  });
}

TEST_CASE("token plumbing and embedding") {
  Rng rng(6);
  ParameterStore store;
  store.create("x", {2, 3, 2, 4}, [](Rng& r) { return normal01(r); }, rng);
  store.create("tab", {5, 3}, [](Rng& r) { return normal01(r); }, rng);
  store.create("v", {2, 3}, [](Rng& r) { return normal01(r); }, rng);
  Tensor w = random_tensor({2, 3, 2, 4}, rng);
  std::vector<int> idx{1, 4, 0, 2, 2, 3, 1, 1, 0, 4, 3, 2, 0, 0, 1, 2};
  check_all(store, {"x", "tab", "v"}, [&](Graph& g, Binder& bd) {
    int tok = g.chw_to_tokens(bd("x"));          // (16,3)
    int emb = g.embed(bd("tab"), idx);           // (16,3)
    int sum = g.add(tok, emb);
    sum = g.add_rows_grouped(sum, bd("v"), 8);
    int s1 = g.slice_rows(sum, 0, 8);
    int s2 = g.slice_rows(sum, 8, 8);
    int back = g.concat_rows({s2, s1});
    int chw = g.tokens_to_chw(back, 2, 3, 2, 4);
    return g.weighted_sum(chw, w);
  });
}

TEST_CASE("losses") {
  Rng rng(7);
  ParameterStore store;
  store.create("p", {4, 6}, [](Rng& r) { return normal01(r); }, rng);
  Tensor target = random_tensor({4, 6}, rng);
  check_all(store, {"p"}, [&](Graph& g, Binder& bd) {
    return g.mse_loss(bd("p"), target);
  });
  std::vector<int> targets{2, 0, 5, 1};
  check_all(store, {"p"}, [&](Graph& g, Binder& bd) {
    return g.softmax_ce_loss(bd("p"), targets);
  });
}

TEST_CASE("attention block composite") {
  Rng rng(8);
  ParameterStore store;
  int B = 2, N = 6, M = 3, C = 8, Dc = 5;
  init_attention(store, "attn", C, Dc, rng);
  store.create("x", {B * N, C}, [](Rng& r) { return normal01(r); }, rng);
  store.create("cond", {B * M, Dc}, [](Rng& r) { return normal01(r); }, rng);
  Tensor w = random_tensor({B * N, C}, rng);
  auto names = store.names();
  check_all(store, names, [&](Graph& g, Binder& bd) {
    int out = attention_fwd(g, bd, "attn", bd("x"), B, N, bd("cond"), M, C);
    return g.weighted_sum(out, w);
  });
}

TEST_CASE("resblock ffn and time mlp composites") {
  Rng rng(9);
  ParameterStore store;
  int B = 2, Cin = 4, Cout = 6, td = 8;
  init_resblock(store, "rb", Cin, Cout, td, rng);
  init_ffn(store, "ffn", Cout, 12, rng);
  init_time_mlp(store, "tm", td, td, rng);
  store.create("x", {B, Cin, 2, 4}, [](Rng& r) { return normal01(r); }, rng);
  Tensor temb_in = time_embedding({3, 7}, td);
  Tensor w = random_tensor({B, Cout, 2, 4}, rng);
  Tensor w2 = random_tensor({B * 8, Cout}, rng);
  auto names = store.names();
  check_all(store, names, [&](Graph& g, Binder& bd) {
    int temb = time_mlp_fwd(g, bd, "tm", g.constant(temb_in));
    int y = resblock_fwd(g, bd, "rb", bd("x"), temb, Cin, Cout);
    int tok = g.chw_to_tokens(y);
    int z = ffn_fwd(g, bd, "ffn", tok);
    return g.add(g.weighted_sum(y, w), g.weighted_sum(z, w2));
  });
}

TEST_CASE("forward determinism") {
  Rng rng(10);
  ParameterStore store;
  init_resblock(store, "rb", 3, 3, 4, rng);
  store.create("x", {1, 3, 4, 4}, [](Rng& r) { return normal01(r); }, rng);
  auto run = [&]() {
    Graph g;
    Binder b(g, store);
    int temb = g.constant(time_embedding({2}, 4));
    int y = resblock_fwd(g, b, "rb", b("x"), temb, 3, 3);
    return g.val(y).v;
  };
  CHECK(run() == run());
}

}  // TEST_SUITE
