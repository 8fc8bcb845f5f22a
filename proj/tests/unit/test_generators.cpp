#include "doctest.h"

#include "patchgen/losses/losses.hpp"
#include "patchgen/model/generators.hpp"
#include "patchgen/train/adam.hpp"
#include "test_util.hpp"

using namespace patchgen;
using namespace patchgen::model;
using patchgen::testing::random_matrix;

namespace {

GeneratorConfig toy(GeneratorKind kind, Eigen::Index k, Eigen::Index n, Eigen::Index d = 4) {
  GeneratorConfig cfg;
  cfg.kind = kind;
  cfg.patches = k;
  cfg.points = n;
  cfg.latent_dim = d;
  cfg.mlp_widths = {8, 6};
  cfg.point_trans_widths = {8, 4};
  cfg.point_trans_depth = 1;
  cfg.point_heads = 2;
  cfg.dual_model_dim = 8;
  cfg.dual_pairs = 2;
  cfg.dual_point_heads = 2;
  cfg.patch_heads = 2;
  cfg.ffn_multiplier = 2;
  return cfg;
}

struct Built {
  Generator gen;
  ParameterStore store;
  explicit Built(const GeneratorConfig& cfg, std::uint64_t seed = 11) : gen(cfg) {
    std::mt19937_64 rng(seed);
    gen.init(store, rng);
  }
  Matrix run(const Matrix& z) {
    Tape tape;
    return gen.forward(tape, store, tape.constant(z)).value();
  }
};

constexpr GeneratorKind kAllKinds[] = {GeneratorKind::mlp, GeneratorKind::point_trans, GeneratorKind::dual_trans};

}  // namespace

TEST_CASE("generator kind names round-trip") {
  for (auto kind : kAllKinds) CHECK(parse_generator_kind(generator_kind_name(kind)) == kind);
  CHECK_THROWS_AS(parse_generator_kind("gru"), ConfigError);
}

TEST_CASE("expand_input layout and gradients") {
  std::mt19937_64 rng(1);
  const Matrix prior = random_matrix(256, 2, rng);
  {
    Tape tape;
    const Var z = tape.variable(Matrix::Zero(1, 128));
    const Var out = expand_input(z, tape.constant(prior));
    CHECK(out.rows() == 256);
    CHECK(out.cols() == 130);
    CHECK(out.value().leftCols(128).cwiseAbs().maxCoeff() == 0.0);
    CHECK(out.value().rightCols(2) == prior);
    tape.backward(nn::sum(out));
    CHECK((z.grad().array() == 256.0).all());
  }
  const Matrix z = random_matrix(2, 3, rng);
  const Matrix p = random_matrix(5, 2, rng);
  const double err = patchgen::testing::check_input_gradients(
      [](Tape& t, const std::vector<Var>& in) {
        return patchgen::testing::weighted_total(t, expand_input(in[0], in[1]));
      },
      {z, p});
  CHECK(err < 1e-6);
}

TEST_CASE("patch sizes sum to N and partition the ids") {
  for (auto kind : kAllKinds) {
    for (Eigen::Index k : {2, 4, 8, 16, 32}) {
      const Eigen::Index n = 64;
      Built b(toy(kind, k, n));
      std::mt19937_64 rng(static_cast<std::uint64_t>(k));
      const Matrix out = b.run(random_matrix(2, 4, rng));
      CHECK(out.rows() == 2 * n);
      CHECK(out.cols() == 3);
      CHECK(out.allFinite());
      const auto ids = b.gen.patch_ids();
      REQUIRE(ids.size() == static_cast<std::size_t>(n));
      std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
      for (std::size_t j = 0; j < ids.size(); ++j) {
        REQUIRE(ids[j] < k);
        if (j > 0) CHECK(ids[j] >= ids[j - 1]);
        ++counts[ids[j]];
      }
      const auto sizes = b.gen.config().patch_sizes();
      for (Eigen::Index i = 0; i < k; ++i) CHECK(counts[static_cast<std::size_t>(i)] == sizes[static_cast<std::size_t>(i)]);
      const PointCloud cloud = b.gen.decode(sample_prior(4, 9), b.store);
      CHECK(cloud.size() == static_cast<std::size_t>(n));
    }
  }
}

TEST_CASE("default configuration gives 8 patches of 256 points") {
  GeneratorConfig cfg;
  CHECK(cfg.input_width() == 130);
  const auto sizes = cfg.patch_sizes();
  CHECK(sizes.size() == 8);
  for (auto s : sizes) CHECK(s == 256);
}

TEST_CASE("unequal splits are allowed except for dual_trans") {
  auto cfg = toy(GeneratorKind::mlp, 3, 10);
  CHECK(cfg.patch_sizes() == std::vector<Eigen::Index>{4, 3, 3});
  Built b(cfg);
  CHECK(b.run(Matrix::Ones(1, 4)).rows() == 10);
  cfg.kind = GeneratorKind::dual_trans;
  CHECK_THROWS_WITH_AS(Generator{cfg}, "dual_trans requires equal patches", ConfigError);
  CHECK_THROWS_AS(Generator{toy(GeneratorKind::mlp, 5, 4)}, ConfigError);
}

TEST_CASE("latent width is checked") {
  Built b(toy(GeneratorKind::mlp, 2, 8));
  CHECK_THROWS_AS(b.run(Matrix::Zero(1, 5)), ShapeError);
}

TEST_CASE("distinct latents give distinct outputs") {
  for (auto kind : kAllKinds) {
    Built b(toy(kind, 4, 16));
    const PointCloud a = b.gen.decode(sample_prior(4, 1), b.store);
    const PointCloud c = b.gen.decode(sample_prior(4, 2), b.store);
    CHECK((a.points() - c.points()).cwiseAbs().maxCoeff() > 0.0);
  }
}

TEST_CASE("MLP-G per-point locality holds bitwise") {
  Built b(toy(GeneratorKind::mlp, 4, 16));
  const Matrix z = Matrix::Constant(1, 4, 0.3);
  const Matrix before = b.run(z);
  auto& prior = b.store.at(b.gen.prior_name(2));
  prior.value[3] += 0.25f;  // row 1, column 1 of patch 2
  const Matrix after = b.run(z);
  const Eigen::Index changed_row = 2 * 4 + 1;
  for (Eigen::Index r = 0; r < before.rows(); ++r) {
    if (r == changed_row) {
      CHECK(before.row(r) != after.row(r));
    } else {
      CHECK(before.row(r) == after.row(r));
    }
  }
}

TEST_CASE("MLP-G row order follows prior row order") {
  Built b(toy(GeneratorKind::mlp, 1, 6));
  const Matrix z = Matrix::Constant(1, 4, -0.2);
  const Matrix before = b.run(z);
  auto& prior = b.store.at(b.gen.prior_name(0));
  std::swap(prior.value[0], prior.value[8]);
  std::swap(prior.value[1], prior.value[9]);
  const Matrix after = b.run(z);
  CHECK((after.row(0) - before.row(4)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((after.row(4) - before.row(0)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((after.middleRows(1, 3) - before.middleRows(1, 3)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("PointTrans-G isolates patches bitwise and is equivariant") {
  Built b(toy(GeneratorKind::point_trans, 4, 16));
  const Matrix z = Matrix::Constant(1, 4, 0.1);
  const Matrix before = b.run(z);
  b.store.at(b.gen.prior_name(1)).value[0] += 0.5f;
  const Matrix after = b.run(z);
  CHECK(before.middleRows(4, 4) != after.middleRows(4, 4));
  for (Eigen::Index i : {0, 2, 3}) CHECK(before.middleRows(4 * i, 4) == after.middleRows(4 * i, 4));

  // swapping two prior rows swaps the corresponding outputs
  auto& prior = b.store.at(b.gen.prior_name(3));
  const Matrix base = b.run(z);
  std::swap(prior.value[0], prior.value[6]);
  std::swap(prior.value[1], prior.value[7]);
  const Matrix swapped = b.run(z);
  CHECK((swapped.row(12) - base.row(15)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((swapped.row(15) - base.row(12)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("PointTrans-G single-point patches stay finite") {
  Built b(toy(GeneratorKind::point_trans, 4, 4));
  CHECK(b.run(Matrix::Ones(2, 4)).allFinite());
}

TEST_CASE("DualTrans-G mixes information across patches") {
  Built b(toy(GeneratorKind::dual_trans, 4, 16));
  const Matrix z = Matrix::Constant(1, 4, 0.1);
  const Matrix before = b.run(z);
  b.store.at(b.gen.prior_name(1)).value[0] += 0.5f;
  const Matrix after = b.run(z);
  bool other_changed = false;
  for (Eigen::Index i : {0, 2, 3}) other_changed |= before.middleRows(4 * i, 4) != after.middleRows(4 * i, 4);
  CHECK(other_changed);
}

TEST_CASE("DualTrans-G patch attention rows sum to one") {
  Built b(toy(GeneratorKind::dual_trans, 4, 16));
  Tape tape;
  nn::PatchAttentionProbe probe;
  b.gen.forward(tape, b.store, tape.constant(Matrix::Constant(2, 4, 0.4)), &probe);
  for (Eigen::Index c = 0; c < 2; ++c) {
    for (Eigen::Index h = 0; h < probe.heads; ++h) {
      const Matrix a = probe.weights(c, h);
      CHECK(a.rows() == 4);
      CHECK(a.cols() == 4);
      CHECK((a.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("DualTrans-G with one patch has trivial patch attention") {
  Built b(toy(GeneratorKind::dual_trans, 1, 6));
  Tape tape;
  nn::PatchAttentionProbe probe;
  const Var out = b.gen.forward(tape, b.store, tape.constant(Matrix::Constant(1, 4, 0.4)), &probe);
  CHECK(out.rows() == 6);
  CHECK(probe.weights(0, 0) == Matrix::Ones(1, 1));
}

TEST_CASE("Chamfer gradient through each generator matches finite differences") {
  for (auto kind : kAllKinds) {
    CAPTURE(generator_kind_name(kind));
    Built b(toy(kind, 2, 6, 3));
    std::mt19937_64 rng(4);
    const Matrix target = random_matrix(6, 3, rng);
    const Matrix z = random_matrix(1, 3, rng);
    auto f = [&](Tape& tape) {
      const Var out = b.gen.forward(tape, b.store, tape.constant(z));
      return losses::chamfer(out, tape.constant(target), 6, 6);
    };
    CHECK(patchgen::testing::check_param_gradients(f, b.store, 4) < 1e-3);
    const double err = patchgen::testing::check_input_gradients(
        [&](Tape& tape, const std::vector<Var>& in) {
          tape.freeze(b.store);
          return losses::chamfer(b.gen.forward(tape, b.store, in[0]), tape.constant(target), 6, 6);
        },
        {z});
    CHECK(err < 1e-3);
  }
}

TEST_CASE("patch priors are trainable") {
  for (auto kind : kAllKinds) {
    Built b(toy(kind, 2, 8));
    std::mt19937_64 rng(2);
    const Matrix target = random_matrix(8, 3, rng);
    std::vector<std::vector<float>> priors;
    for (Eigen::Index i = 0; i < 2; ++i) priors.push_back(b.store.at(b.gen.prior_name(i)).value);
    b.store.zero_grad();
    {
      Tape tape;
      const Var out = b.gen.forward(tape, b.store, tape.constant(Matrix::Ones(1, 4)));
      tape.backward(losses::chamfer(out, tape.constant(target), 8, 8));
    }
    train::adam_step(b.store, train::AdamConfig{});
    bool changed = false;
    for (Eigen::Index i = 0; i < 2; ++i) changed |= priors[static_cast<std::size_t>(i)] != b.store.at(b.gen.prior_name(i)).value;
    CHECK(changed);
  }
}

TEST_CASE("priors are initialized uniformly on the unit square") {
  Built b(toy(GeneratorKind::mlp, 2, 400));
  for (Eigen::Index i = 0; i < 2; ++i) {
    const auto& p = b.store.at(b.gen.prior_name(i));
    CHECK(p.rows == 200);
    CHECK(p.cols == 2);
    for (float v : p.value) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }
}

TEST_CASE("parameter counts match independent enumeration") {
  auto dense = [](std::size_t in, std::size_t out) { return (in + 1) * out; };
  {
    GeneratorConfig cfg;
    const Generator g(cfg);
    const auto c = g.param_counts();
    CHECK(c.per_patch_each == 27203);
    CHECK(c.per_patch_each == dense(130, 128) + dense(128, 64) + dense(64, 32) + dense(32, 3));
    CHECK(c.per_patch_total == 8 * 27203);
    CHECK(c.priors == 2048 * 2);
    CHECK(c.shared == 0);
  }
  {
    // transformer layer at width d, heads irrelevant to the count, ffn 4d
    auto tf = [&](std::size_t d) { return 2 * d + 4 * dense(d, d) + 2 * d + dense(d, 4 * d) + dense(4 * d, d); };
    GeneratorConfig cfg;
    cfg.kind = GeneratorKind::point_trans;
    const Generator g(cfg);
    const std::size_t each = dense(130, 128) + 2 * tf(128) + dense(128, 64) + 2 * tf(64) + dense(64, 3);
    CHECK(g.param_counts().per_patch_each == each);
    CHECK(g.param_counts().total() == 8 * each + 4096);
  }
  {
    auto tf = [&](std::size_t d) { return 2 * d + 4 * dense(d, d) + 2 * d + dense(d, 2 * d) + dense(2 * d, d); };
    GeneratorConfig cfg = toy(GeneratorKind::dual_trans, 4, 16);
    const Generator g(cfg);
    const std::size_t expect = dense(6, 8) + tf(8) + tf(8) + tf(8) + tf(8) + dense(8, 3);
    CHECK(g.param_counts().shared == expect);
    CHECK(g.param_counts().per_patch_total == 0);
  }
  for (auto kind : kAllKinds) {
    Built b(toy(kind, 4, 16));
    std::size_t stored = 0;
    for (const auto& e : b.store.entries()) stored += e.size();
    CHECK(stored == b.gen.param_counts().total());
  }
}

TEST_CASE("per-patch parameter count grows with the patch count") {
  std::size_t last = 0;
  for (Eigen::Index k : {1, 2, 4, 8, 16, 32}) {
    GeneratorConfig cfg;
    cfg.patches = k;
    const auto c = Generator(cfg).param_counts();
    CHECK(c.total() > last);
    last = c.total();
  }
}
