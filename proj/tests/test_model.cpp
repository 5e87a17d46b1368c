#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <map>

#include "hta/checkpoint.hpp"
#include "hta/model.hpp"
#include "oracles.hpp"

namespace hta {
namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.blocks = {{3, 3, 3, 1, 1, 2, 2}, {4, 3, 3, 1, 1, 1, 1}};
  return cfg;
}

TEST(Model, ParameterCount) {
  Model<float> m;
  EXPECT_EQ(m.parameter_count(), 1058405u);
  std::map<std::string, std::size_t> by;
  for (const auto& p : m.parameters()) by[p.name.substr(0, p.name.find('.'))] += p.value->size();
  EXPECT_EQ(by["conv1"], 992u);
  EXPECT_EQ(by["conv2"], 30784u);
  EXPECT_EQ(by["conv3"], 204928u);
  EXPECT_EQ(by["conv4"], 819456u);
  EXPECT_EQ(by["bn1"] + by["bn2"] + by["bn3"] + by["bn4"], 960u);
  EXPECT_EQ(by["fc"], 1285u);
}

TEST(Model, ShapeTrace) {
  const auto trace = Model<float>().shape_trace({1, 2, 64, 259});
  const std::vector<Shape> want{{1, 2, 64, 259},   {1, 32, 33, 130}, {1, 64, 35, 130}, {1, 128, 35, 130},
                                {1, 256, 35, 130}, {1, 256},         {1, 5}};
  EXPECT_EQ(trace, want);
}

TEST(Model, BatchOfThreeAndEvalDeterminism) {
  Model<float> m;
  Rng rng(1);
  m.init(rng);
  Tensor<float> x({3, 2, 64, 259});
  for (auto& v : x.vec()) v = static_cast<float>(normal(rng));
  const auto a = m.forward(x, Mode::Eval);
  EXPECT_EQ(a.shape(), (Shape{3, 5}));
  EXPECT_EQ(m.forward(x, Mode::Eval), a);
  EXPECT_EQ(m.infer(x), a);
}

TEST(Model, RejectsWrongChannelCount) {
  Model<float> m(tiny_config());
  EXPECT_THROW(m.infer(Tensor<float>({1, 1, 8, 8})), Error);
}

TEST(Model, WholeNetworkGradientCheck) {
  Model<double> m(tiny_config());
  Rng rng(4);
  m.init(rng);
  auto x = oracle::random_tensor(rng, {2, 2, 6, 7});
  const std::vector<int> labels{1, 3};
  auto loss = [&] {
    Model<double> copy = m.cast<double>();
    return cross_entropy(copy.forward(x, Mode::Train), labels).loss;
  };
  const auto r = cross_entropy(m.forward(x, Mode::Train), labels);
  m.backward(r.grad);
  for (auto& p : m.parameters()) {
    const Tensor<double> analytic = *p.grad;
    const auto numeric = oracle::numeric_grad(*p.value, loss);
    // A conv bias feeding batch norm is cancelled by the mean subtraction, so
    // its true gradient is zero and only finite-difference noise remains.
    if (p.name.find("bias") != std::string::npos && p.name.rfind("conv", 0) == 0) {
      for (std::size_t i = 0; i < numeric.size(); ++i) {
        EXPECT_NEAR(analytic[i], 0.0, 1e-9) << p.name;
        EXPECT_NEAR(numeric[i], 0.0, 1e-7) << p.name;
      }
      continue;
    }
    EXPECT_LT(oracle::rel_error(analytic, numeric), 1e-4) << p.name;
  }
}

TEST(Model, EpochsOfSgdReduceLoss) {
  Model<double> m(tiny_config());
  Rng rng(8);
  m.init(rng);
  const auto x = oracle::random_tensor(rng, {4, 2, 6, 6});
  const std::vector<int> labels{0, 1, 2, 3};
  const double first = cross_entropy(m.forward(x, Mode::Train), labels).loss;
  double last = first;
  for (int i = 0; i < 50; ++i) {
    const auto r = cross_entropy(m.forward(x, Mode::Train), labels);
    m.backward(r.grad);
    m.sgd_step(0.1);
    last = r.loss;
  }
  EXPECT_LT(last, first * 0.5);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Model<float> m(tiny_config());
  Rng rng(12);
  m.init(rng);
  for (auto& [n, t] : m.state())
    for (auto& v : t->vec()) v += static_cast<float>(uniform(rng, -0.1, 0.1));
  const auto bytes = encode_checkpoint(m);
  Model<float> back = decode_checkpoint(bytes);
  EXPECT_EQ(back.config(), m.config());
  auto a = m.state();
  auto b = back.state();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].first, b[i].first);
    EXPECT_EQ(0, std::memcmp(a[i].second->data(), b[i].second->data(), a[i].second->size() * sizeof(float)));
  }
  EXPECT_EQ(encode_checkpoint(back), bytes);

  const auto path = std::filesystem::temp_directory_path() / "hta_ckpt_roundtrip.htac";
  save_checkpoint(m, path);
  Model<float> loaded = load_checkpoint(path);
  EXPECT_EQ(encode_checkpoint(loaded), bytes);
  std::filesystem::remove(path);
}

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::ParseError;  // not expected in these tests
}

TEST(Checkpoint, RejectsTamperedInput) {
  Model<float> m(tiny_config());
  auto bytes = encode_checkpoint(m);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_EQ(code_of([&] { decode_checkpoint(bad_magic); }), ErrorCode::CorruptCheckpoint);

  auto bad_version = bytes;
  const std::uint32_t v = 999;
  std::memcpy(bad_version.data() + 4, &v, 4);
  EXPECT_EQ(code_of([&] { decode_checkpoint(bad_version); }), ErrorCode::VersionMismatch);

  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  EXPECT_EQ(code_of([&] { decode_checkpoint(truncated); }), ErrorCode::CorruptCheckpoint);

  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_EQ(code_of([&] { decode_checkpoint(trailing); }), ErrorCode::CorruptCheckpoint);

  EXPECT_EQ(code_of([] { load_checkpoint("/nonexistent/model.htac"); }), ErrorCode::IoError);
}

TEST(Checkpoint, RejectsShapeMismatch) {
  NamedTensors ts;
  Model<float> m(tiny_config());
  ts.emplace_back(kConfigTensorName, encode_config(m.config()));
  for (auto& [n, t] : m.state()) ts.emplace_back(n, n == "fc.bias" ? Tensor<float>({7}) : *t);
  EXPECT_EQ(code_of([&] { decode_checkpoint(encode_tensors(ts)); }), ErrorCode::CorruptCheckpoint);
}

}  // namespace
}  // namespace hta
