#include <doctest.h>

#include <cmath>

#include "saae/datasets.hpp"
#include "saae/error.hpp"
#include "saae/training.hpp"
#include "support.hpp"

using namespace saae;
using namespace saae::training;

namespace {

WindowSet random_windows(std::mt19937_64& rng, int n, int t, int ch, int classes) {
  WindowSet ws;
  for (int i = 0; i < n; ++i) ws.push_back(test::random_window(rng, t, ch, 1 + i % 3, 1 + i % classes));
  return ws;
}

TrainConfig toy_config() {
  TrainConfig c;
  c.architecture = "toy";
  c.batch_size = 8;
  c.max_epochs = 2;
  c.seed = 3;
  return c;
}

std::vector<nn::Matrix> snapshot(network::SaaeModel& m) {
  std::vector<nn::Matrix> out;
  for (auto& p : m.named_parameters()) out.push_back(p.param->value);
  for (auto& b : m.named_buffers()) out.push_back(*b.buffer);
  return out;
}

}  // namespace

TEST_CASE("weighted reconstruction loss") {
  Eigen::RowVectorXd x(2), xh(2);
  x << 1, 0;
  xh << 0, 0;
  CHECK(reconstruction_loss(x, xh, 0.5) == doctest::Approx(0.25));
  CHECK(reconstruction_loss(x, x, 1.0) == 0.0);
}

TEST_CASE("pure and disparity losses at an uninformative discriminator") {
  auto model = network::build_model(8, 2, 2, 1, network::Architecture::toy());
  model.d.layer().weight().value.setZero();
  model.d.layer().bias().value.setZero();
  const int dim = model.meta().latent_dim;
  const nn::Matrix z = nn::Matrix::Random(1, dim);
  const std::vector<int> labels{2};
  const std::map<int, double> w{{2, 1.0}};
  CHECK(pure_loss(z, z, labels, w, model) == doctest::Approx(2.0 * std::log(0.5)));
  CHECK(pure_loss(z, z, labels, w, model) == doctest::Approx(-1.3863).epsilon(1e-4));
  CHECK(disparity_loss(z, labels, w, model) == doctest::Approx(-0.6931).epsilon(1e-4));
  CHECK(disparity_loss(z, labels, w, model, true) == doctest::Approx(std::log(0.5)));
}

TEST_CASE("log objectives clamp instead of reaching -inf") {
  nn::Matrix logits(1, 2);
  logits << 0.0, 1000.0;
  const std::vector<int> l1{1}, l2{2};
  const std::vector<double> w{1.0};
  CHECK(mean_log_true(logits, l1, w).value == doctest::Approx(std::log(kLogClamp)));
  CHECK(mean_log_false(logits, l2, w).value == doctest::Approx(std::log(kLogClamp)));
  CHECK(mean_log_true(logits, l1, w).grad_logits.isZero(0.0));
}

TEST_CASE("log objective gradients match central differences on logits") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 2.0);
  nn::Param logits(6, 4);
  for (Eigen::Index i = 0; i < logits.value.size(); ++i) logits.value.data()[i] = g(rng);
  const std::vector<int> labels{1, 2, 3, 4, 2, 1};
  const std::vector<double> w{0.3, 0.5, 0.9, 0.2, 0.7, 1.0};
  for (auto fn : {&mean_log_true, &mean_log_false}) {
    const auto obj = fn(logits.value, labels, w);
    const auto r = test::check_param(logits, obj.grad_logits, [&] { return fn(logits.value, labels, w).value; },
                                     24, rng);
    CHECK(r.failed == 0);
  }
}

TEST_CASE("phase gradients match central differences on the toy model") {
  std::mt19937_64 rng(9);
  auto model = network::build_model(8, 2, 2, 4, network::Architecture::toy());
  const auto ws = random_windows(rng, 6, 8, 2, 2);
  const nn::Maps x = network::to_maps(ws);
  std::vector<int> labels;
  for (const auto& w : ws) labels.push_back(w.label);
  const std::vector<double> w_sample{0.3, 0.6, 0.4, 0.8, 0.5, 0.7};
  const std::vector<double> w_reg{0.45, 0.65, 0.45, 0.65, 0.45, 0.65};

  auto check_group = [&](const std::string& prefix, const std::function<double()>& objective, double sign) {
    std::vector<nn::NamedParam> params;
    for (auto& p : model.named_parameters())
      if (p.name.rfind(prefix + ".", 0) == 0) params.push_back(p);
    REQUIRE(!params.empty());
    std::vector<nn::Matrix> analytic;
    for (auto& p : params) analytic.push_back(sign * p.param->grad);
    int failed = 0, checked = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto r = test::check_param(*params[i].param, analytic[i], objective, 4, rng);
      failed += r.failed;
      checked += r.checked;
    }
    CHECK(checked >= 4 * static_cast<int>(params.size()));
    CHECK(failed == 0);
  };

  SUBCASE("reconstruction") {
    auto obj = [&] { return reconstruction_phase(model, x, w_sample); };
    obj();
    check_group("phi", obj, 1.0);
    obj();
    check_group("theta", obj, 1.0);
    obj();
    for (auto* p : model.group("eta")) CHECK(p->grad.isZero(0.0));
  }
  SUBCASE("pure information") {
    auto obj = [&] { return pure_phase(model, x, labels, w_reg).loss; };
    obj();
    check_group("phi", obj, -1.0);
    obj();
    check_group("d", obj, -1.0);
  }
  SUBCASE("disparity") {
    auto obj = [&] { return disparity_phase(model, x, labels, w_reg); };
    obj();
    check_group("eta", obj, 1.0);
    auto ns = [&] { return disparity_phase(model, x, labels, w_reg, true); };
    ns();
    check_group("eta", ns, -1.0);
  }
}

TEST_CASE("config validation and JSON round trip") {
  TrainConfig c;
  CHECK(c.lr_spectrum == 1e-4);
  CHECK(c.lr_aae == 2e-4);
  CHECK(c.batch_size == 64);
  c.validate();
  c.seed = 42;
  c.spectrum_enabled = false;
  const auto back = nlohmann::json(c).get<TrainConfig>();
  CHECK(nlohmann::json(back) == nlohmann::json(c));
  CHECK_THROWS_AS(nlohmann::json::parse(R"({"batchsize": 3})").get<TrainConfig>(), Error);
  const auto partial = nlohmann::json::parse(R"({"lr_aae": 5e-5})").get<TrainConfig>();
  CHECK(partial.lr_aae == 5e-5);
  CHECK(partial.batch_size == 64);
  for (auto bad : {R"({"u_frac": 0.6})", R"({"lr_aae": 0})", R"({"architecture": "wide"})", R"({"batch_size": 1})"}) {
    const auto cfg = nlohmann::json::parse(bad).get<TrainConfig>();
    CHECK_THROWS_AS(cfg.validate(), Error);
  }
}

TEST_CASE("history record JSON round trip") {
  HistoryRecord r;
  r.iteration = 7;
  r.loss_rec = 0.125;
  r.class_weights = {{1, 0.25}, {3, 0.5}};
  const auto back = nlohmann::json(r).get<HistoryRecord>();
  CHECK(back.iteration == 7);
  CHECK(back.loss_rec == 0.125);
  CHECK(back.class_weights == r.class_weights);
}

TEST_CASE("one history record per iteration") {
  std::mt19937_64 rng(1);
  auto cfg = toy_config();
  cfg.max_epochs = 3;
  const auto ws = random_windows(rng, 20, 8, 2, 2);
  const auto res = train(ws, 2, cfg);
  CHECK(res.history.size() == 3 * 3);  // ceil(20 / 8) per epoch
  for (std::size_t i = 0; i < res.history.size(); ++i) CHECK(res.history[i].iteration == static_cast<long>(i));

  // 17 = 2 * 8 + 1: the single leftover window joins the last batch.
  const auto odd = train(random_windows(rng, 17, 8, 2, 2), 2, cfg);
  CHECK(odd.history.size() == 3 * 2);

  cfg.max_iterations = 4;
  CHECK(train(ws, 2, cfg).history.size() == 4);
}

TEST_CASE("training is reproducible from the seed") {
  std::mt19937_64 rng(2);
  const auto ws = random_windows(rng, 24, 8, 2, 2);
  auto a = train(ws, 2, toy_config());
  auto b = train(ws, 2, toy_config());
  CHECK(snapshot(a.state.model) == snapshot(b.state.model));
  CHECK(nlohmann::json(a.history).dump() == nlohmann::json(b.history).dump());
  auto other = toy_config();
  other.seed = 4;
  auto c = train(ws, 2, other);
  CHECK(snapshot(c.state.model) != snapshot(a.state.model));
}

TEST_CASE("a pinned unit guide reproduces the unguided run bit for bit") {
  std::mt19937_64 rng(3);
  const auto ws = random_windows(rng, 24, 8, 2, 2);
  auto cfg = toy_config();
  auto pinned = make_state(8, 2, 2, cfg);
  pinned.guide.pin(1.0);
  auto a = train_from(std::move(pinned), ws, cfg);
  cfg.spectrum_enabled = false;
  auto b = train(ws, 2, cfg);
  CHECK(snapshot(a.state.model) == snapshot(b.state.model));
  for (const auto& r : a.history) CHECK(r.mean_weight == 1.0);
}

TEST_CASE("weights come from the guide after its update in the same step") {
  std::mt19937_64 rng(4);
  const auto ws = random_windows(rng, 8, 8, 2, 2);
  const auto cfg = toy_config();
  auto stepped = make_state(8, 2, 2, cfg);
  const auto rec = train_step(stepped, ws, cfg);

  auto manual = make_state(8, 2, 2, cfg);
  const auto records = spectrum::make_records(spectrum::amplitude_spectra(ws));
  const double ls = spectrum::update_guide(manual.guide, manual.guide_opt, records, 8, manual.pair_rng);
  const auto w = sample_weights(manual.guide, records);
  double mean = 0.0;
  for (double v : w) mean += v / 8.0;
  CHECK(rec.loss_spectrum == ls);
  CHECK(rec.mean_weight == doctest::Approx(mean).epsilon(1e-14));
}

TEST_CASE("moving a training state keeps its optimizers attached") {
  std::mt19937_64 rng(6);
  const auto ws = random_windows(rng, 8, 8, 2, 2);
  const auto cfg = toy_config();
  auto direct = make_state(8, 2, 2, cfg);
  auto source = make_state(8, 2, 2, cfg);
  train_step(direct, ws, cfg);
  train_step(source, ws, cfg);
  TrainState moved(std::move(source));
  train_step(direct, ws, cfg);
  train_step(moved, ws, cfg);
  CHECK(snapshot(direct.model) == snapshot(moved.model));
}

TEST_CASE("train_step rejects bad minibatches") {
  std::mt19937_64 rng(7);
  auto cfg = toy_config();
  auto st = make_state(8, 2, 2, cfg);
  auto ws = random_windows(rng, 4, 8, 2, 2);
  CHECK_THROWS_AS(train_step(st, std::span<const SignalWindow>(ws.data(), 1), cfg), Error);
  ws[0].label = 3;
  CHECK_THROWS_AS(train_step(st, ws, cfg), Error);
}

TEST_CASE("non-finite input stops training with a named error") {
  std::mt19937_64 rng(8);
  auto cfg = toy_config();
  auto st = make_state(8, 2, 2, cfg);
  auto ws = random_windows(rng, 4, 8, 2, 2);
  ws[1].data(2, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(train_step(st, ws, cfg), Error);
}

TEST_CASE("each phase moves only the parameters it owns") {
  std::mt19937_64 rng(12);
  const auto ws = random_windows(rng, 8, 8, 2, 2);
  const nn::Maps x = network::to_maps(ws);
  std::vector<int> labels;
  for (const auto& w : ws) labels.push_back(w.label);
  const std::vector<double> ones(8, 1.0);
  auto state = make_state(8, 2, 2, toy_config());
  auto values = [&](const std::string& group) {
    std::vector<nn::Matrix> out;
    for (auto* p : state.model.group(group)) out.push_back(p->value);
    return out;
  };
  auto all = [&] {
    return std::vector<std::vector<nn::Matrix>>{values("phi"), values("eta"), values("theta"), values("d")};
  };
  enum { Phi, Eta, Theta, D };

  auto before = all();
  reconstruction_phase(state.model, x, ones);
  state.rec_opt.step();
  auto after = all();
  CHECK(after[Eta] == before[Eta]);
  CHECK(after[D] == before[D]);
  CHECK(after[Phi] != before[Phi]);
  CHECK(after[Theta] != before[Theta]);

  before = after;
  pure_phase(state.model, x, labels, ones);
  state.pur_opt.step();
  after = all();
  CHECK(after[Eta] == before[Eta]);
  CHECK(after[Theta] == before[Theta]);
  CHECK(after[Phi] != before[Phi]);
  CHECK(after[D] != before[D]);

  before = after;
  disparity_phase(state.model, x, labels, ones);
  state.dis_opt.step();
  after = all();
  CHECK(after[Phi] == before[Phi]);
  CHECK(after[Theta] == before[Theta]);
  CHECK(after[D] == before[D]);
  CHECK(after[Eta] != before[Eta]);
}

TEST_CASE("the alternation ascends the pure objective and descends the disparity objective") {
  int ascents = 0, descents = 0;
  const int trials = 40;
  for (int t = 0; t < trials; ++t) {
    std::mt19937_64 rng(100 + t);
    const auto ws = random_windows(rng, 8, 8, 2, 2);
    const nn::Maps x = network::to_maps(ws);
    std::vector<int> labels;
    for (const auto& w : ws) labels.push_back(w.label);
    std::vector<double> weights(8);
    for (double& w : weights) w = std::uniform_real_distribution<double>(0.2, 1.0)(rng);
    auto cfg = toy_config();
    cfg.seed = static_cast<std::uint64_t>(t);
    auto state = make_state(8, 2, 2, cfg);

    const double pur0 = pure_phase(state.model, x, labels, weights).loss;
    state.pur_opt.step();
    ascents += pure_phase(state.model, x, labels, weights).loss > pur0;

    const double dis0 = disparity_phase(state.model, x, labels, weights);
    state.dis_opt.step();
    descents += disparity_phase(state.model, x, labels, weights) < dis0;
  }
  MESSAGE("ascents " << ascents << "/" << trials << ", descents " << descents << "/" << trials);
  CHECK(ascents >= 0.9 * trials);
  CHECK(descents >= 0.9 * trials);
}

TEST_CASE("short training on the synthetic corpus learns something") {
  datasets::SynthConfig sc;
  sc.windows_per_cell = 20;
  const auto fold = datasets::loso_fold(datasets::synth_generate(sc), 1);
  TrainConfig cfg;
  cfg.seed = 5;
  cfg.max_iterations = 150;
  cfg.max_epochs = 1000;
  auto untrained = make_state(sc.window_length, sc.channels, sc.classes, cfg);
  auto run = train(fold.train, sc.classes, cfg);

  auto reconstruction_error = [&](network::SaaeModel& m) {
    const auto code = network::make_latent(network::encode_pure(m, fold.test), network::encode_disparity(m, fold.test));
    const auto x_hat = network::decode(m, code.z);
    double err = 0.0;
    for (std::size_t i = 0; i < fold.test.size(); ++i) {
      const auto& d = fold.test[i].data;
      const Eigen::Map<const Eigen::RowVectorXd> x(d.data(), d.size());
      err += (x - x_hat.row(static_cast<Eigen::Index>(i))).squaredNorm() / static_cast<double>(d.size());
    }
    return err / static_cast<double>(fold.test.size());
  };
  const double trained_err = reconstruction_error(run.state.model);
  const double untrained_err = reconstruction_error(untrained.model);
  MESSAGE("held-out reconstruction error " << trained_err << " (untrained " << untrained_err << ")");
  CHECK(trained_err < untrained_err);

  const auto preds = network::predict(run.state.model, fold.test);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hit += preds[i] == fold.test[i].label;
  const double acc = static_cast<double>(hit) / static_cast<double>(preds.size());
  MESSAGE("held-out accuracy " << acc);
  CHECK(acc > 1.0 / sc.classes);  // classes are balanced
}
