#include <doctest.h>

#include "perfed/datagen.hpp"
#include "perfed/errors.hpp"
#include "perfed/gan.hpp"
#include "test_support.hpp"

using namespace perfed;
using namespace perfed::gan;

namespace {

struct Fixture {
  nn::ModelSpec spec;
  nn::Params params;
  Generator gen;
  datagen::Task task;
  std::vector<Vector> means;
};

// Classifier trained on one Gaussian cloud per class (sigma = 1), plus a fresh
// mirrored generator.
Fixture trained_fixture(int dim, int classes, std::uint64_t seed) {
  Fixture f;
  f.means = datagen::ring_means(classes, dim, 3.0);
  datagen::MixtureSpec ms{classes, dim, f.means, std::vector<double>(static_cast<std::size_t>(classes), 1.0),
                          400, 40};
  f.task = datagen::make_mixture_task(ms, seed);
  f.spec = {dim, {8, 16}, classes};
  f.params = nn::train_classifier(nn::init_params(f.spec, seed), f.task.train, testing::sgd(0.05, 20, 16), seed);
  f.gen = init_generator(GeneratorSpec::mirror(f.spec, 8), seed);
  return f;
}

}  // namespace

TEST_CASE("generator mirrors the client architecture") {
  const nn::ModelSpec spec{3, {8, 16, 24}, 5};
  const auto g = GeneratorSpec::mirror(spec, 8);
  CHECK(g.hidden_widths == std::vector<int>{24, 16, 8});
  CHECK(g.output_dim == 3);
  CHECK(g.layer_dims() == std::vector<int>{13, 24, 16, 8, 3});
  const auto gen = init_generator(g, 1);
  CHECK(gen.params.input_dim() == 13);
  CHECK(gen.params.output_dim() == 3);
}

TEST_CASE("build_discriminator copies the trunk and adds a scalar head") {
  const nn::ModelSpec spec{2, {8, 16}, 3};
  const nn::Params client = nn::init_params(spec, 4);
  const Discriminator d = build_discriminator(spec, client, 9);
  REQUIRE(d.net.layers.size() == 3);
  CHECK(d.trunk_depth() == 2);
  CHECK(d.net.layers[0].weight.cols() == 2 + 3);
  CHECK(d.net.layers[0].weight.leftCols(2) == client.layers[0].weight);
  CHECK(d.net.layers[0].weight.rightCols(3).isZero(0.0));
  CHECK(d.net.layers[0].bias == client.layers[0].bias);
  CHECK(d.net.layers[1] == client.layers[1]);
  CHECK(d.net.layers[2].weight.rows() == 1);
  CHECK(d.net.layers[2].weight.cols() == 16);

  const Discriminator again = build_discriminator(spec, client, 9);
  CHECK(again.net == d.net);
  const Discriminator other_head = build_discriminator(spec, client, 10);
  CHECK(other_head.net.layers[0] == d.net.layers[0]);
  CHECK_FALSE(other_head.net.layers[2] == d.net.layers[2]);

  const Discriminator zero = build_discriminator(spec, client.zeros_like(), 9);
  CHECK(zero.net.layers[0].weight.isZero(0.0));
  CHECK(zero.net.layers[1].weight.isZero(0.0));

  nn::Params back = client.zeros_like();
  write_back_trunk(d, back);
  CHECK(back.layers[0] == client.layers[0]);
  CHECK(back.layers[1] == client.layers[1]);
  CHECK(back.layers[2].weight.isZero(0.0));
}

TEST_CASE("train_cgan with zero steps is the identity") {
  const auto f = trained_fixture(2, 3, 1);
  GanOpts opts;
  opts.steps = 0;
  const auto r = train_cgan(f.params, f.spec, f.gen, f.task.train, opts, 5);
  CHECK(r.client_params == f.params);
  CHECK(r.generator == f.gen);
}

TEST_CASE("train_cgan is deterministic and only moves the trunk") {
  const auto f = trained_fixture(2, 3, 2);
  GanOpts opts;
  opts.steps = 50;
  const auto a = train_cgan(f.params, f.spec, f.gen, f.task.train, opts, 5);
  const auto b = train_cgan(f.params, f.spec, f.gen, f.task.train, opts, 5);
  CHECK(a.client_params == b.client_params);
  CHECK(a.generator == b.generator);
  CHECK_FALSE(a.generator == f.gen);
  CHECK_FALSE(a.client_params.layers[0] == f.params.layers[0]);
  CHECK(a.client_params.layers.back() == f.params.layers.back());
  const auto c = train_cgan(f.params, f.spec, f.gen, f.task.train, opts, 6);
  CHECK_FALSE(c.generator == a.generator);
}

TEST_CASE("train_cgan rejects bad inputs and reports divergence") {
  const auto f = trained_fixture(2, 3, 3);
  LabeledDataset empty;
  empty.class_count = 3;
  empty.features.resize(0, 2);
  CHECK_THROWS_AS(train_cgan(f.params, f.spec, f.gen, empty, {}, 1), ContractError);
  GanOpts wild;
  wild.steps = 20;
  wild.gen_lr = 1e200;
  wild.disc_lr = 1e200;
  try {
    train_cgan(f.params, f.spec, f.gen, f.task.train, wild, 1);
    FAIL("expected divergence");
  } catch (const NumericDivergence& e) {
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}

TEST_CASE("dp with zero noise and a huge clip reproduces the plain trajectory") {
  const auto f = trained_fixture(2, 3, 4);
  GanOpts plain;
  plain.steps = 60;
  GanOpts dp = plain;
  dp.dp = DpOpts{1e300, 0.0};
  const auto a = train_cgan(f.params, f.spec, f.gen, f.task.train, plain, 8);
  const auto b = train_cgan(f.params, f.spec, f.gen, f.task.train, dp, 8);
  CHECK(a.client_params == b.client_params);
  CHECK(a.generator == b.generator);

  GanOpts noisy = plain;
  noisy.dp = DpOpts{0.5, 1.0};
  const auto c = train_cgan(f.params, f.spec, f.gen, f.task.train, noisy, 8);
  CHECK_FALSE(c.generator == a.generator);
}

TEST_CASE("dp_clip_noise") {
  nn::Params g = nn::Params::zeros({2, 2});
  g.layers[0].weight << 6.0, 0.0, 0.0, 8.0;  // norm 10
  const auto clipped = dp_clip_noise(g, 1.0, 0.0, std::uint64_t{1});
  CHECK(std::sqrt(nn::squared_norm(clipped)) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(clipped.layers[0].weight(0, 0) == doctest::Approx(0.6));
  CHECK(clipped.layers[0].weight(1, 1) == doctest::Approx(0.8));

  nn::Params small = nn::Params::zeros({2, 2});
  small.layers[0].weight(0, 1) = 0.3;
  small.layers[0].bias(0) = 0.4;  // norm 0.5
  CHECK(dp_clip_noise(small, 1.0, 0.0, std::uint64_t{3}) == small);

  const auto n1 = dp_clip_noise(g, 1.0, 0.5, std::uint64_t{1});
  const auto n2 = dp_clip_noise(g, 1.0, 0.5, std::uint64_t{2});
  CHECK_FALSE(n1 == n2);
  // Subtracting the clipped core leaves pure noise of the configured scale.
  nn::Params noise = n1;
  nn::add_scaled(noise, clipped, -1.0);
  CHECK(std::sqrt(nn::squared_norm(noise)) > 0.0);
  CHECK(noise.layers[0].weight.cwiseAbs().maxCoeff() < 0.5 * 6.0);

  std::mt19937_64 rng(17);
  std::normal_distribution<double> normal(0.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    nn::Params r = nn::Params::zeros({3, 4, 2});
    for (auto& l : r.layers) {
      for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = normal(rng);
      for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = normal(rng);
    }
    const double clip = 0.1 + 0.1 * trial;
    CHECK(std::sqrt(nn::squared_norm(dp_clip_noise(r, clip, 0.0, std::uint64_t{1}))) <= clip * (1.0 + 1e-15));
  }
}

TEST_CASE("generate_labeled respects the requested counts") {
  const auto gen = init_generator({8, 3, {4}, 2}, 1);
  const auto batch = generate_labeled(gen, {2, 2, 2}, 5, 7);
  CHECK(batch.size() == 6);
  CHECK(batch.labels == std::vector<int>{0, 0, 1, 1, 2, 2});
  CHECK(batch.origins == std::vector<int>(6, 7));
  CHECK(batch.features.rows() == 6);
  CHECK(batch.features.cols() == 2);
  CHECK(batch.features.allFinite());

  const auto one = generate_labeled(gen, {1, 0, 0}, 5);
  CHECK(one.labels == std::vector<int>{0});

  const auto again = generate_labeled(gen, {2, 2, 2}, 5, 7);
  CHECK(again.features == batch.features);
  CHECK_THROWS_AS(generate_labeled(gen, {0, 0, 0}, 5), ContractError);
  CHECK_THROWS_AS(generate_labeled(gen, {1, 1}, 5), ContractError);

  const auto as_data = batch.to_dataset();
  CHECK(as_data.ids == std::vector<std::int64_t>(6, LabeledDataset::kSyntheticId));
}

TEST_CASE("mode fidelity: generated class means land within half a sigma") {
  // Seeds enumerated explicitly; sigma = 1 for every class.
  for (int dim : {1, 2}) {
    for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
      const auto f = trained_fixture(dim, 2, seed);
      const auto r = train_cgan(f.params, f.spec, f.gen, f.task.train, GanOpts{}, seed);
      const auto batch = generate_labeled(r.generator, {1000, 1000}, seed + 100);
      for (int c = 0; c < 2; ++c) {
        const Vector mean = batch.features.middleRows(c * 1000, 1000).colwise().mean().transpose();
        CAPTURE(dim);
        CAPTURE(seed);
        CAPTURE(c);
        CHECK((mean - f.means[static_cast<std::size_t>(c)]).norm() < 0.5);
      }
    }
  }
}
