#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "textsr/codec.hpp"
#include "textsr/params.hpp"

using namespace textsr;
namespace fs = std::filesystem;

TEST_SUITE("params_codec") {

TEST_CASE("checkpoint round-trips bit-exactly") {
  Rng rng(77);
  ParameterStore store;
  store.create("net.w", {4, 5}, [](Rng& r) { return normal01(r); }, rng);
  store.create("net.b", {5}, [](Rng& r) { return normal01(r); }, rng);
  store.create("other.table", {3, 2, 2}, [](Rng& r) { return normal01(r); }, rng);

  fs::path dir = fs::temp_directory_path() / "textsr_ckpt_test";
  fs::create_directories(dir);
  std::string path = (dir / "a.dtsr").string();
  save_checkpoint(store, path);
  ParameterStore back = load_checkpoint(path);
  CHECK(back.names() == store.names());
  for (const auto& name : store.names()) {
    CHECK(back.get(name).shape == store.get(name).shape);
    CHECK(back.get(name).v == store.get(name).v);  // bit-exact
  }

  // Saving the loaded store reproduces identical bytes.
  std::string path2 = (dir / "b.dtsr").string();
  save_checkpoint(back, path2);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
}

TEST_CASE("checkpoint header layout") {
  ParameterStore store;
  store.create_const("x", {2}, 1.5);
  fs::path dir = fs::temp_directory_path() / "textsr_ckpt_test";
  fs::create_directories(dir);
  std::string path = (dir / "hdr.dtsr").string();
  save_checkpoint(store, path);
  std::ifstream f(path, std::ios::binary);
  char magic[4];
  f.read(magic, 4);
  CHECK(std::string(magic, 4) == "DTSR");
  uint8_t b[8];
  f.read(reinterpret_cast<char*>(b), 8);
  CHECK(b[0] == 1);  // version LE
  CHECK(b[4] == 1);  // tensor count LE
  uint8_t nl[2];
  f.read(reinterpret_cast<char*>(nl), 2);
  CHECK(nl[0] == 1);
  char name;
  f.read(&name, 1);
  CHECK(name == 'x');
  int dtype = f.get(), rank = f.get();
  CHECK(dtype == 1);
  CHECK(rank == 1);
}

TEST_CASE("float32 tensors load with widening") {
  // Hand-write a float32 checkpoint.
  fs::path dir = fs::temp_directory_path() / "textsr_ckpt_test";
  fs::create_directories(dir);
  std::string path = (dir / "f32.dtsr").string();
  std::ofstream f(path, std::ios::binary);
  f.write("DTSR", 4);
  uint8_t ver[4] = {1, 0, 0, 0}, cnt[4] = {1, 0, 0, 0};
  f.write(reinterpret_cast<char*>(ver), 4);
  f.write(reinterpret_cast<char*>(cnt), 4);
  uint8_t nl[2] = {1, 0};
  f.write(reinterpret_cast<char*>(nl), 2);
  f.put('q');
  f.put(0);  // f32
  f.put(1);  // rank 1
  uint8_t dim[4] = {2, 0, 0, 0};
  f.write(reinterpret_cast<char*>(dim), 4);
  float vals[2] = {1.5f, -2.25f};
  f.write(reinterpret_cast<char*>(vals), 8);
  f.close();
  ParameterStore store = load_checkpoint(path);
  CHECK(store.get("q").v == std::vector<double>{1.5, -2.25});
}

TEST_CASE("optimizer state restores moments and step") {
  Rng rng(3);
  ParameterStore store;
  store.create("w", {3}, [](Rng& r) { return normal01(r); }, rng);
  Adam opt(AdamConfig{});
  std::map<std::string, Tensor> grads;
  grads.emplace("w", Tensor({3}, 0.5));
  opt.step(store, grads);
  opt.step(store, grads);

  fs::path dir = fs::temp_directory_path() / "textsr_ckpt_test";
  fs::create_directories(dir);
  std::string path = (dir / "opt.dtsr").string();
  save_optimizer_state(store, opt.step_count(), path);

  ParameterStore fresh;
  Rng rng2(3);
  fresh.create("w", {3}, [](Rng& r) { return normal01(r); }, rng2);
  long long step = load_optimizer_state(fresh, path);
  CHECK(step == 2);
  CHECK(fresh.moment1("w").v == store.moment1("w").v);
  CHECK(fresh.moment2("w").v == store.moment2("w").v);
}

TEST_CASE("adam descends a quadratic and clips by global norm") {
  ParameterStore store;
  store.create_const("w", {2}, 4.0);
  AdamConfig cfg;
  cfg.lr = 0.1;
  cfg.clip_norm = 1.0;
  Adam opt(cfg);
  for (int i = 0; i < 200; ++i) {
    Tensor g({2});
    g.v[0] = 2.0 * store.get("w").v[0];
    g.v[1] = 2.0 * store.get("w").v[1];
    std::map<std::string, Tensor> grads;
    grads.emplace("w", g);
    opt.step(store, grads);
  }
  CHECK(std::abs(store.get("w").v[0]) < 0.1);
}

TEST_CASE("codec shapes and exact inversion") {
  LatentCodec codec = LatentCodec::make(4);
  Rng rng(11);
  Tensor img({3, 32, 128});
  for (double& x : img.v) x = uniform01(rng);
  Tensor z = codec_encode(img, codec);
  CHECK(z.shape == std::vector<int>{48, 8, 32});
  Tensor back = codec_decode(z, codec);
  CHECK(back.v == img.v);  // bit-exact

  Tensor half({3, 8, 8}, 0.5);
  Tensor zh = codec_encode(half, codec);
  for (double x : zh.v) CHECK(x == (0.5 - codec.shift[0]) * codec.scale[0]);

  Tensor bad({3, 30, 128});
  CHECK_THROWS_AS(codec_encode(bad, codec), std::invalid_argument);
  Tensor badlat({47, 8, 32});
  CHECK_THROWS_AS(codec_decode(badlat, codec), std::invalid_argument);
}

TEST_CASE("codec inversion stays exact with power-of-two scales") {
  LatentCodec codec = LatentCodec::make(2);
  for (auto& s : codec.scale) s = 2.0;
  codec.validate();
  Rng rng(13);
  Tensor img({3, 8, 8});
  for (double& x : img.v) x = uniform01(rng);
  CHECK(codec_decode(codec_encode(img, codec), codec).v == img.v);

  LatentCodec bad = LatentCodec::make(2);
  for (auto& s : bad.shift) s = 0.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

}  // TEST_SUITE
