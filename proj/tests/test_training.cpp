#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "test_util.hpp"
#include "wsgg/kernels.hpp"
#include "wsgg/losses.hpp"
#include "wsgg/optimizer.hpp"
#include "wsgg/synth.hpp"
#include "wsgg/training.hpp"

using namespace wsgg;

namespace {

constexpr double kTol = 1e-9;

SynthSpec tiny_spec(std::uint64_t seed = 0) {
  SynthSpec spec;
  spec.num_images = 6;
  spec.num_categories = 6;
  spec.proposals_per_image = 5;
  spec.entities_per_image = 2;
  spec.edges_per_image = 1;
  spec.feature_dim = 6;
  spec.embed_dim = 6;
  spec.expert_dim = 5;
  spec.grid_size = 8;
  spec.seed = seed;
  return spec;
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.batch_size = 3;
  cfg.hidden_dim = 5;
  cfg.embed_dim = 4;
  cfg.learning_rate = 0.01;
  return cfg;
}

struct Fixture {
  SynthDataset data;
  ActivationMapTable maps;
  SynonymMatcher matcher;

  explicit Fixture(const SynthSpec& spec) : data(synth_dataset(spec)) {
    for (const ActivationMap& m : data.activation_maps) maps.add(m);
  }
};

bool params_equal(const GrounderParams& a, const GrounderParams& b) {
  auto& ma = const_cast<GrounderParams&>(a);
  auto& mb = const_cast<GrounderParams&>(b);
  auto va = param_views(ma);
  auto vb = param_views(mb);
  for (std::size_t i = 0; i < va.size(); ++i) {
    if (va[i].n != vb[i].n) return false;
    if (std::memcmp(va[i].data, vb[i].data, va[i].n * sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace

// --- caption/image score -------------------------------------------------------

TEST_CASE("caption_image_score: single zero entry is sigmoid(0)") {
  Mat a(1, 1);
  a(0, 0) = 0.0;
  CHECK(caption_image_score(a) == doctest::Approx(0.5).epsilon(kTol));
}

TEST_CASE("caption_image_score: max picks the saturated positive") {
  Mat a(1, 2);
  a(0, 0) = -1000.0;
  a(0, 1) = 1000.0;
  CHECK(caption_image_score(a) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("caption_image_score: mean over entity maxima") {
  Mat a(2, 2);
  a.data = {0.0, 0.0, 1000.0, 0.0};
  CHECK(caption_image_score(a) == doctest::Approx(0.75).epsilon(1e-9));
}

TEST_CASE("caption_image_score rejects empty matrices") {
  Mat empty;
  CHECK_THROWS_AS(caption_image_score(empty), std::invalid_argument);
}

TEST_CASE("caption_image_score ties break to the lowest proposal index") {
  Mat a(1, 3);
  a.data = {0.5, 0.5, 0.2};
  ScoreCache cache;
  caption_image_score(a, &cache);
  CHECK(cache.argmax[0] == 0);
}

// --- MIL loss --------------------------------------------------------------------

TEST_CASE("mil_loss: margin satisfied is zero") {
  CHECK(mil_loss(0.9, {0.5}, 0.2) == doctest::Approx(0.0));
}

TEST_CASE("mil_loss: equal scores pay the margin") {
  CHECK(mil_loss(0.5, {0.5}, 0.2) == doctest::Approx(0.2).epsilon(kTol));
}

TEST_CASE("mil_loss: hinge sum over negatives") {
  CHECK(mil_loss(0.55, {0.5, 0.6}, 0.2) == doctest::Approx(0.4).epsilon(kTol));
}

TEST_CASE("mil_loss is nonnegative and zero iff margins hold") {
  Rng rng(5);
  for (int it = 0; it < 200; ++it) {
    const double pos = rng.next_double();
    std::vector<double> negs(1 + rng.next_int(4));
    for (double& n : negs) n = rng.next_double();
    const double loss = mil_loss(pos, negs, 0.2);
    CHECK(loss >= 0.0);
    bool all_beaten = true;
    for (double n : negs) {
      if (n - pos + 0.2 > 0.0) all_beaten = false;
    }
    CHECK((loss == 0.0) == all_beaten);
  }
}

// --- KD loss ----------------------------------------------------------------------

TEST_CASE("kd_loss: q equal to softmax(a) gives zero") {
  Mat a(2, 3);
  a.data = {0.1, -0.4, 2.0, 0.0, 0.0, 0.0};
  Mat p;
  kernels::softmax_rows(a, p);
  std::vector<TargetDistribution> q(2);
  for (int i = 0; i < 2; ++i) {
    q[i].defined = true;
    q[i].values.assign(p.row(i), p.row(i) + 3);
  }
  CHECK(kd_loss(q, a) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("kd_loss: one-hot target against uniform logits is ln 2") {
  Mat a(1, 2);
  a.data = {0.0, 0.0};
  std::vector<TargetDistribution> q(1);
  q[0].defined = true;
  q[0].values = {1.0, 0.0};
  CHECK(kd_loss(q, a) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("kd_loss: uniform against uniform is zero for any width") {
  for (int nv : {1, 3, 7}) {
    Mat a(1, nv, 0.0);
    std::vector<TargetDistribution> q(1);
    q[0].defined = true;
    q[0].values.assign(nv, 1.0 / nv);
    CHECK(kd_loss(q, a) == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("kd_loss skips undefined targets") {
  Mat a(2, 2);
  a.data = {5.0, -3.0, 0.0, 0.0};
  std::vector<TargetDistribution> q(2);
  q[0].defined = false;
  q[0].values = {0.0, 0.0};
  q[1].defined = true;
  q[1].values = {1.0, 0.0};
  CHECK(kd_loss(q, a) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("kd_loss is nonnegative on random targets") {
  Rng rng(6);
  for (int it = 0; it < 200; ++it) {
    const int nv = 2 + rng.next_int(5);
    Mat a(1, nv);
    for (double& v : a.data) v = rng.normal();
    std::vector<TargetDistribution> q(1);
    q[0].defined = true;
    q[0].values = rng.dirichlet_flat(nv);
    CHECK(kd_loss(q, a) >= -1e-12);
  }
}

// --- config invariants ---------------------------------------------------------

TEST_CASE("TrainConfig enforces lambda = 1 iff self-guided") {
  TrainConfig cfg = tiny_config();
  cfg.fusion = FusionStrategy::average;
  cfg.lambda_adaptor = 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.fusion = FusionStrategy::self;
  cfg.validate();
  CHECK(cfg.lambda() == 1);
  cfg.lambda_adaptor = -1;
  cfg.fusion = FusionStrategy::expert;
  CHECK(cfg.lambda() == 0);
  cfg.margin_alpha1 = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("reweight strategies require both teachers") {
  TrainConfig cfg = tiny_config();
  cfg.fusion = FusionStrategy::expert;
  cfg.teachers = {true, false};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

// --- training behavior -----------------------------------------------------------

TEST_CASE("zero epochs returns the initialization unchanged") {
  Fixture fx(tiny_spec(3));
  TrainConfig cfg = tiny_config();
  cfg.epochs = 0;
  TrainResult result = train_grounder(fx.data.images, fx.data.graphs, fx.data.embeddings, fx.maps,
                                      &fx.data.expert, fx.matcher, cfg);
  GrounderDims dims{6, 6, cfg.hidden_dim, cfg.embed_dim};
  GrounderParams init = GrounderParams::init(dims, cfg.seed);
  CHECK(params_equal(result.params, init));
  CHECK(result.log.empty());
}

TEST_CASE("training is bitwise deterministic given the seed") {
  Fixture fx(tiny_spec(4));
  TrainConfig cfg = tiny_config();
  cfg.epochs = 2;
  cfg.fusion = FusionStrategy::self;
  auto r1 = train_grounder(fx.data.images, fx.data.graphs, fx.data.embeddings, fx.maps,
                           &fx.data.expert, fx.matcher, cfg);
  auto r2 = train_grounder(fx.data.images, fx.data.graphs, fx.data.embeddings, fx.maps,
                           &fx.data.expert, fx.matcher, cfg);
  CHECK(params_equal(r1.params, r2.params));
  CHECK(r1.adaptor.w == r2.adaptor.w);
  for (std::size_t e = 0; e < r1.log.size(); ++e) {
    CHECK(r1.log[e].total == r2.log[e].total);
  }
}

TEST_CASE("with lambda 0 the adaptor parameters never change") {
  Fixture fx(tiny_spec(5));
  TrainConfig cfg = tiny_config();
  cfg.epochs = 3;
  cfg.fusion = FusionStrategy::average;
  TrainResult result = train_grounder(fx.data.images, fx.data.graphs, fx.data.embeddings, fx.maps,
                                      &fx.data.expert, fx.matcher, cfg);
  AdaptorParams init = AdaptorParams::init(cfg.embed_dim, cfg.seed);
  CHECK(result.adaptor.w == init.w);
  CHECK(result.adaptor.b == init.b);
}

TEST_CASE("adaptor loss leaves encoder gradients bitwise untouched") {
  Fixture fx(tiny_spec(6));
  TrainConfig cfg = tiny_config();
  cfg.fusion = FusionStrategy::self;
  cfg.validate();

  TrainingSet set = TrainingSet::build(fx.data.images, fx.data.graphs, fx.data.embeddings, cfg,
                                       &fx.maps, &fx.data.expert);
  TeacherTable teachers = build_teacher_table(set, fx.matcher, &fx.maps, &fx.data.expert, cfg);
  GrounderDims dims{6, 6, cfg.hidden_dim, cfg.embed_dim};
  GrounderParams params = GrounderParams::init(dims, 1);
  AdaptorParams adaptor = AdaptorParams::init(dims.d, 1);

  std::vector<int> batch{0, 1, 2};
  Rng neg_rng(77);
  StepContext ctx = prepare_step_context(set, batch, teachers, params, adaptor, cfg, neg_rng);

  GrounderParams grads_with = GrounderParams::zeros_like(params);
  AdaptorParams agrads = AdaptorParams::zeros_like(adaptor);
  StepLosses with_adp = step_losses(set, batch, ctx, params, adaptor, cfg, &grads_with, &agrads);

  // Same frozen context with the adaptor term dropped (lambda 0): encoder
  // and head gradients must match bitwise, so the adaptor objective cannot
  // leak into the student.
  TrainConfig cfg_no_lambda = cfg;
  cfg_no_lambda.fusion = FusionStrategy::expert;
  GrounderParams grads_without = GrounderParams::zeros_like(params);
  StepLosses without_adp =
      step_losses(set, batch, ctx, params, adaptor, cfg_no_lambda, &grads_without, nullptr);

  CHECK(params_equal(grads_with, grads_without));
  CHECK(with_adp.mil == without_adp.mil);
  CHECK(with_adp.kd == without_adp.kd);
  CHECK(with_adp.adp > 0.0);

  // The literal update: stepping only the adaptor leaves the grounder alone.
  GrounderParams before = params;
  AdamOptimizer opt(0.05);
  opt.step(param_views(adaptor), param_views(agrads));
  CHECK(params_equal(params, before));
}

TEST_CASE("losses decrease over the first epochs on the clean synthetic set") {
  SynthSpec spec = tiny_spec(7);
  spec.num_images = 10;
  Fixture fx(spec);
  TrainConfig cfg = tiny_config();
  cfg.epochs = 5;
  cfg.learning_rate = 0.02;
  TrainResult result = train_grounder(fx.data.images, fx.data.graphs, fx.data.embeddings, fx.maps,
                                      &fx.data.expert, fx.matcher, cfg);
  REQUIRE(result.log.size() == 5);
  int increases = 0;
  for (std::size_t e = 1; e < result.log.size(); ++e) {
    if (result.log[e].total > result.log[e - 1].total) ++increases;
  }
  CHECK(increases <= 1);
}

TEST_CASE("provider misses name the offending record") {
  Fixture fx(tiny_spec(8));
  TrainConfig cfg = tiny_config();
  cfg.epochs = 1;

  EntityEmbeddingTable missing = fx.data.embeddings;
  missing.rows_by_image.erase(fx.data.images[2].image_id);
  try {
    train_grounder(fx.data.images, fx.data.graphs, missing, fx.maps, &fx.data.expert, fx.matcher,
                   cfg);
    FAIL("expected a provider miss");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find(fx.data.images[2].image_id) != std::string::npos);
  }

  ActivationMapTable empty_maps;
  CHECK_THROWS_AS(train_grounder(fx.data.images, fx.data.graphs, fx.data.embeddings, empty_maps,
                                 &fx.data.expert, fx.matcher, cfg),
                  std::runtime_error);
}

// --- gradient checks -------------------------------------------------------------

namespace {

// Fixed batch and frozen step context over a small net; the step loss is a
// pure function of the parameters, which finite differences then perturb.
// A short Adam warmup moves the checkpoint off the symmetric initialization
// (dead rectifier rows there produce exactly tied similarity columns).
struct GradCheckRig {
  Fixture fx;
  TrainConfig cfg;
  TrainingSet set;
  TeacherTable teachers;
  GrounderParams params;
  AdaptorParams adaptor;
  std::vector<int> batch;
  StepContext ctx;

  GradCheckRig(TrainConfig config, std::uint64_t data_seed, std::uint64_t param_seed,
               std::vector<int> batch_ids, int warmup_steps)
      : fx(tiny_spec(data_seed)),
        cfg(config),
        set(TrainingSet::build(fx.data.images, fx.data.graphs, fx.data.embeddings, cfg, &fx.maps,
                               &fx.data.expert)),
        teachers(build_teacher_table(set, fx.matcher, &fx.maps, &fx.data.expert, cfg)),
        params(GrounderParams::init({6, 6, cfg.hidden_dim, cfg.embed_dim}, param_seed)),
        adaptor(AdaptorParams::init(cfg.embed_dim, param_seed)),
        batch(std::move(batch_ids)) {
    AdamOptimizer gopt(0.02), aopt(0.02);
    Rng warm_rng(555);
    for (int step = 0; step < warmup_steps; ++step) {
      StepContext wctx = prepare_step_context(set, batch, teachers, params, adaptor, cfg, warm_rng);
      GrounderParams g = GrounderParams::zeros_like(params);
      AdaptorParams ag = AdaptorParams::zeros_like(adaptor);
      step_losses(set, batch, wctx, params, adaptor, cfg, &g,
                  cfg.lambda() == 1 ? &ag : nullptr);
      gopt.step(param_views(params), param_views(g));
      if (cfg.lambda() == 1) aopt.step(param_views(adaptor), param_views(ag));
    }
    Rng neg_rng(1234);
    ctx = prepare_step_context(set, batch, teachers, params, adaptor, cfg, neg_rng);
  }

  StepLosses losses(GrounderParams* g, AdaptorParams* a) {
    return step_losses(set, batch, ctx, params, adaptor, cfg, g, a);
  }

  // A central difference with step 1e-3 perturbs one parameter at a time, so
  // a rectifier pre-activation moves by at most max|input| * 1e-3 and the
  // loss stays on one smooth branch iff the base point clears these margins.
  bool smooth_enough() const {
    double max_input = 0.0;
    double relu_margin = std::numeric_limits<double>::infinity();
    double switch_margin = std::numeric_limits<double>::infinity();

    const int nb = static_cast<int>(batch.size());
    std::vector<Mat> h(nb), v(nb);
    for (int b = 0; b < nb; ++b) {
      const TrainingPair& pair = set.pairs[batch[b]];
      const Mat feats = proposal_features(*pair.image);
      for (double x : pair.embeddings->data) max_input = std::max(max_input, std::abs(x));
      for (double x : feats.data) max_input = std::max(max_input, std::abs(x));
      MlpCache hc, vc;
      h[b] = encode_text(*pair.embeddings, params, &hc);
      v[b] = encode_visual(feats, params, &vc);
      for (double z : hc.z1.data) relu_margin = std::min(relu_margin, std::abs(z));
      for (double z : vc.z1.data) relu_margin = std::min(relu_margin, std::abs(z));
    }
    std::vector<std::vector<double>> s(nb, std::vector<double>(nb));
    for (int c = 0; c < nb; ++c) {
      for (int i = 0; i < nb; ++i) {
        Mat a = similarity_matrix(h[c], v[i], params);
        for (int r = 0; r < a.rows; ++r) {
          double top1 = -1e300, top2 = -1e300;
          for (int j = 0; j < a.cols; ++j) {
            const double x = a(r, j);
            if (x > top1) {
              top2 = top1;
              top1 = x;
            } else if (x > top2) {
              top2 = x;
            }
          }
          if (a.cols > 1) switch_margin = std::min(switch_margin, top1 - top2);
        }
        s[c][i] = caption_image_score(a);
      }
    }
    for (int c = 0; c < nb; ++c) {
      for (int i = 0; i < nb; ++i) {
        if (i != c) {
          switch_margin =
              std::min(switch_margin, std::abs(s[c][i] - s[c][c] + cfg.margin_alpha1));
        }
      }
    }
    if (cfg.lambda() == 1) {
      for (const auto& pc : ctx.per_pair) {
        for (const AdaptorTuple& t : pc.adaptor_tuples) {
          const double neg = adaptor_score(adaptor, t.v_negative, t.h);
          if (t.object_defined) {
            switch_margin = std::min(
                switch_margin,
                std::abs(neg - adaptor_score(adaptor, t.v_object, t.h) + cfg.margin_alpha2));
          }
          if (t.interaction_defined) {
            switch_margin = std::min(
                switch_margin,
                std::abs(neg - adaptor_score(adaptor, t.v_interaction, t.h) + cfg.margin_alpha2));
          }
        }
      }
    }
    return relu_margin > 1.5 * max_input * 1e-3 && switch_margin > 1e-2;
  }
};

// First parameter seed whose warmed-up base point sits away from every kink
// and keeps the loss terms the test asserts on active.
template <typename Active>
std::uint64_t smooth_param_seed(const TrainConfig& cfg, std::uint64_t data_seed,
                                const std::vector<int>& batch, int warmup, Active active) {
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    GradCheckRig rig(cfg, data_seed, seed, batch, warmup);
    if (!rig.smooth_enough()) continue;
    StepLosses base = rig.losses(nullptr, nullptr);
    if (active(base)) return seed;
  }
  FAIL("no smooth seed found for the gradient check");
  return 0;
}

}  // namespace

TEST_CASE("analytic gradient of L_MIL matches finite differences") {
  TrainConfig cfg = tiny_config();
  cfg.teachers = {false, false};  // MIL only
  const std::vector<int> batch{0, 1, 2};
  const auto active = [](const StepLosses& l) { return l.mil > 0.01; };
  GradCheckRig rig(cfg, 21, smooth_param_seed(cfg, 21, batch, 8, active), batch, 8);

  GrounderParams grads = GrounderParams::zeros_like(rig.params);
  StepLosses base = rig.losses(&grads, nullptr);
  REQUIRE(base.mil > 0.0);  // hinges active, otherwise the check is vacuous

  auto loss = [&]() { return rig.losses(nullptr, nullptr).total; };
  auto views = param_views(rig.params);
  auto numeric = testutil::numeric_gradient(loss, views);
  auto gviews = param_views(grads);
  CHECK(testutil::max_rel_error(testutil::flatten(gviews), numeric) < 1e-4);
}

TEST_CASE("analytic gradient of L_KD matches finite differences") {
  TrainConfig cfg = tiny_config();
  cfg.batch_size = 1;  // no MIL negatives: the step loss is pure KD
  const std::vector<int> batch{0};
  const auto active = [](const StepLosses& l) { return l.kd > 0.01; };
  GradCheckRig rig(cfg, 22, smooth_param_seed(cfg, 22, batch, 10, active), batch, 10);

  GrounderParams grads = GrounderParams::zeros_like(rig.params);
  StepLosses base = rig.losses(&grads, nullptr);
  CHECK(base.mil == 0.0);
  REQUIRE(base.kd > 0.0);

  auto loss = [&]() { return rig.losses(nullptr, nullptr).total; };
  auto views = param_views(rig.params);
  auto numeric = testutil::numeric_gradient(loss, views);
  auto gviews = param_views(grads);
  CHECK(testutil::max_rel_error(testutil::flatten(gviews), numeric) < 1e-4);
}

TEST_CASE("analytic gradient of the full L_GD matches finite differences") {
  TrainConfig cfg = tiny_config();
  cfg.fusion = FusionStrategy::self;  // lambda = 1: MIL + KD + adaptor
  const std::vector<int> batch{0, 1, 2};
  const auto active = [](const StepLosses& l) {
    return l.mil > 0.01 && l.kd > 0.01 && l.adp > 0.01;
  };
  GradCheckRig rig(cfg, 23, smooth_param_seed(cfg, 23, batch, 12, active), batch, 12);

  GrounderParams grads = GrounderParams::zeros_like(rig.params);
  AdaptorParams agrads = AdaptorParams::zeros_like(rig.adaptor);
  StepLosses base = rig.losses(&grads, &agrads);
  REQUIRE(base.mil > 0.0);
  REQUIRE(base.kd > 0.0);
  REQUIRE(base.adp > 0.0);

  auto loss = [&]() { return rig.losses(nullptr, nullptr).total; };

  auto views = param_views(rig.params);
  auto numeric = testutil::numeric_gradient(loss, views);
  auto gviews = param_views(grads);
  CHECK(testutil::max_rel_error(testutil::flatten(gviews), numeric) < 1e-4);

  auto aviews = param_views(rig.adaptor);
  auto numeric_adaptor = testutil::numeric_gradient(loss, aviews);
  auto agviews = param_views(agrads);
  CHECK(testutil::max_rel_error(testutil::flatten(agviews), numeric_adaptor) < 1e-4);
}

TEST_CASE("Adam with zero gradients leaves parameters unchanged") {
  GrounderParams p = GrounderParams::init({4, 4, 3, 3}, 11);
  GrounderParams before = p;
  GrounderParams zeros = GrounderParams::zeros_like(p);
  AdamOptimizer opt(0.1);
  opt.step(param_views(p), param_views(zeros));
  CHECK(params_equal(p, before));
}
