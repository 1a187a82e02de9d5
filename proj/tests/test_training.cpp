#include "doctest_torch.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "dig/checkpoint.hpp"
#include "dig/config.hpp"
#include "dig/errors.hpp"
#include "dig/optim.hpp"
#include "dig/trainer.hpp"
#include "support.hpp"

using namespace dig;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

RunConfig tiny_run(const std::filesystem::path& manifest) {
  auto c = RunConfig::from_preset("desk");
  c.model = test::tiny_config();
  c.pretrain.manifest = manifest.string();
  c.pretrain.optim.batch_size = 4;
  c.pretrain.optim.steps = 6;
  c.pretrain.optim.warmup_steps = 2;
  c.pretrain.log_every = 1;
  c.pretrain.checkpoint_every = 3;
  return c;
}

PretrainBatch tiny_batch(std::size_t count, std::uint64_t seed, const ViewConfig& views = {}) {
  std::vector<Image> images;
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < count; ++i) {
    images.push_back(render_word("word", seed + i).image.pixels);
    seeds.push_back(seed * 100 + i);
  }
  return make_pretrain_batch(images, seeds, views);
}

}  // namespace

TEST_CASE("lr schedule endpoints, continuity and range") {
  CHECK(lr_at(0, 10, 100, 1e-3) == 0.0);
  CHECK(lr_at(10, 10, 100, 1e-3) == 1e-3);
  CHECK(std::abs(lr_at(100, 10, 100, 1e-3)) <= 1e-12);
  CHECK(lr_at(5, 10, 100, 1e-3) == doctest::Approx(5e-4).epsilon(1e-14));
  CHECK(lr_at(55, 10, 100, 1e-3) == doctest::Approx(5e-4).epsilon(1e-12));
  CHECK(std::abs(lr_at(9, 10, 100, 1.0) - lr_at(10, 10, 100, 1.0)) <= 0.1 + 1e-12);
  CHECK(std::abs(lr_at(11, 10, 100, 1.0) - lr_at(10, 10, 100, 1.0)) < 1e-3);
  for (int64_t s = 0; s <= 100; ++s) CHECK(lr_at(s, 10, 100, 1e-3) >= 0.0);
  CHECK(lr_at(0, 0, 10, 2.0) == 2.0);
  CHECK_THROWS_AS(lr_at(101, 10, 100, 1e-3), InvalidArgument);
  CHECK_THROWS_AS(lr_at(-1, 10, 100, 1e-3), InvalidArgument);
  CHECK_THROWS_AS(lr_at(0, 20, 10, 1e-3), InvalidArgument);
}

TEST_CASE("AdamW matches a hand-computed decoupled step") {
  auto w = torch::tensor({{1.0, -2.0, 0.5}}, torch::kFloat64).requires_grad_(true);
  auto b = torch::tensor({0.3, -0.7}, torch::kFloat64).requires_grad_(true);
  AdamWOptions o{0.9, 0.95, 1e-8, 0.05};
  AdamW opt({{"w", w}, {"b", b}}, o);

  std::vector<double> pw{1.0, -2.0, 0.5}, pb{0.3, -0.7};
  std::vector<double> mw(3, 0), vw(3, 0), mb(2, 0), vb(2, 0);
  const double lrs[] = {1e-2, 5e-3, 2e-3};
  for (int t = 1; t <= 3; ++t) {
    opt.zero_grad();
    // Quadratic toy: 0.5 * sum(c * p^2), gradient c * p.
    (0.5 * (w * w).sum() * 3.0 + 0.5 * (b * b).sum()).backward();
    opt.step(lrs[t - 1]);
    const double lr = lrs[t - 1];
    const double bc1 = 1 - std::pow(o.beta1, t), bc2 = 1 - std::pow(o.beta2, t);
    auto upd = [&](double& p, double& m, double& v, double g, bool decay) {
      if (decay) p *= 1 - lr * o.weight_decay;
      m = o.beta1 * m + (1 - o.beta1) * g;
      v = o.beta2 * v + (1 - o.beta2) * g * g;
      p -= lr * (m / bc1) / (std::sqrt(v / bc2) + o.eps);
    };
    for (int i = 0; i < 3; ++i) upd(pw[i], mw[i], vw[i], 3.0 * pw[i], true);
    for (int i = 0; i < 2; ++i) upd(pb[i], mb[i], vb[i], pb[i], false);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(w.index({0, i}).item<double>() - pw[i]) <= 1e-12);
    for (int i = 0; i < 2; ++i) CHECK(std::abs(b.index({i}).item<double>() - pb[i]) <= 1e-12);
  }
  CHECK(opt.step_count() == 3);
  CHECK_THROWS_AS(opt.step(-1.0), InvalidArgument);
}

TEST_CASE("weight decay skips biases, norms, positional embeddings and the mask token") {
  CHECK(decays("encoder.block0.attn.qkv.weight", torch::zeros({3, 3})));
  CHECK_FALSE(decays("encoder.block0.attn.qkv.bias", torch::zeros({3})));
  CHECK_FALSE(decays("encoder.block0.norm1.weight", torch::zeros({3})));
  CHECK_FALSE(decays("encoder.pos_embed", torch::zeros({1, 256, 3})));
  CHECK_FALSE(decays("encoder.mask_token", torch::zeros({1, 1, 3})));
}

TEST_CASE("gradient clipping bounds the global norm") {
  auto a = torch::zeros({2}, torch::kFloat64).requires_grad_(true);
  a.mutable_grad() = torch::tensor({3.0, 4.0}, torch::kFloat64);
  const double norm = clip_grad_norm({{"a", a}}, 1.0);
  CHECK(norm == doctest::Approx(5.0));
  CHECK(a.grad().norm().item<double>() == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("epoch order and batching") {
  const auto o1 = epoch_order(10, 3, 0);
  CHECK(o1 == epoch_order(10, 3, 0));
  CHECK(o1 != epoch_order(10, 3, 1));
  CHECK(std::set<std::size_t>(o1.begin(), o1.end()).size() == 10);
  // 10 items, batch 4: two full batches per epoch, the remainder is dropped.
  CHECK(epoch_of(10, 4, 1) == 0);
  CHECK(epoch_of(10, 4, 2) == 0);
  CHECK(epoch_of(10, 4, 3) == 1);
  const auto b1 = batch_indices(10, 4, 3, 1), b2 = batch_indices(10, 4, 3, 2);
  CHECK(b1 == std::vector<std::size_t>(o1.begin(), o1.begin() + 4));
  CHECK(b2 == std::vector<std::size_t>(o1.begin() + 4, o1.begin() + 8));
  CHECK_THROWS_AS(batch_indices(3, 4, 1, 1), InvalidArgument);
  CHECK_THROWS_AS(epoch_of(10, 4, 0), InvalidArgument);

  OptimConfig oc;
  oc.batch_size = 4;
  oc.epochs = 2;
  oc.warmup_epochs = 0.5;
  CHECK(oc.steps_per_epoch(10) == 2);
  CHECK(oc.total_steps(10) == 4);
  CHECK(oc.warmup(10) == 1);
  oc.steps = 7;
  CHECK(oc.total_steps(10) == 7);
}

TEST_CASE("contrastive mode disables masking, reconstruction mode the momentum branch") {
  ObjectiveConfig c;
  c.mode = "contrastive";
  CHECK(effective_views(ViewConfig{}, c).mask_ratio == 0.0);
  CHECK(c.weights().alpha == 0.0);
  c.mode = "joint";
  CHECK(effective_views(ViewConfig{}, c).mask_ratio == 0.6);
  c.mode = "other";
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("pretrain step: alpha zero, zero lr, EMA sequencing, no momentum gradients") {
  torch::manual_seed(21);
  DiGModel model(test::tiny_config());
  OptimConfig oc;
  auto opt = make_optimizer(model->online_parameters(), oc);
  const auto batch = tiny_batch(4, 5);

  ObjectiveConfig obj;
  obj.alpha = 0.0;
  const auto l = pretrain_losses(model, batch, obj);
  CHECK(l.loss.item<double>() == l.loss_c.item<double>());
  CHECK(l.loss_m.item<double>() > 0.0);

  obj.alpha = 0.1;
  std::vector<torch::Tensor> before;
  for (const auto& [n, p] : model->online_parameters()) before.push_back(p.detach().clone());
  pretrain_step(model, opt, batch, obj, 0.0);
  std::size_t i = 0;
  for (const auto& [n, p] : model->online_parameters()) CHECK_MESSAGE(torch::equal(p, before[i++]), n);

  for (int step = 0; step < 3; ++step) {
    std::vector<torch::Tensor> momentum_before;
    for (const auto& [t, s] : model->momentum_pairs()) momentum_before.push_back(t.detach().clone());
    const auto m = pretrain_step(model, opt, batch, obj, 1e-3);
    CHECK(std::isfinite(m.loss));
    CHECK(m.loss == doctest::Approx(m.loss_c + 0.1 * m.loss_m).epsilon(1e-6));
    std::size_t k = 0;
    bool moved = false;
    for (const auto& [t, s] : model->momentum_pairs()) {
      const auto expect = momentum_before[k].mul_(obj.momentum).add_(s, 1.0 - obj.momentum);
      CHECK(torch::equal(t, expect));
      moved = moved || !torch::equal(t, s);
      ++k;
    }
    CHECK(moved);
    for (const auto& p : model->momentum->parameters()) CHECK_FALSE(p.grad().defined());
  }
}

TEST_CASE("reconstruction mode leaves the momentum branch alone") {
  torch::manual_seed(22);
  DiGModel model(test::tiny_config());
  auto opt = make_optimizer(model->online_parameters(), OptimConfig{});
  ObjectiveConfig obj;
  obj.mode = "reconstruction";
  std::vector<torch::Tensor> before;
  for (const auto& p : model->momentum->parameters()) before.push_back(p.detach().clone());
  const auto m = pretrain_step(model, opt, tiny_batch(4, 6), obj, 1e-3);
  CHECK(m.loss_c == 0.0);
  CHECK(m.loss == m.loss_m);
  std::size_t i = 0;
  for (const auto& p : model->momentum->parameters()) CHECK(torch::equal(p, before[i++]));
}

TEST_CASE("repeated steps on one batch drive the loss down") {
  torch::manual_seed(23);
  DiGModel model(test::tiny_config());
  OptimConfig oc;
  oc.weight_decay = 0.0;
  auto opt = make_optimizer(model->online_parameters(), oc);
  const auto batch = tiny_batch(8, 7);
  ObjectiveConfig obj;
  std::vector<double> losses;
  for (int s = 0; s < 60; ++s) losses.push_back(pretrain_step(model, opt, batch, obj, 1e-3).loss);
  const double head = (losses[0] + losses[1] + losses[2]) / 3.0;
  const double tail = (losses[57] + losses[58] + losses[59]) / 3.0;
  CHECK(tail < 0.7 * head);
}

TEST_CASE("non-finite inputs stop the step with the batch indices") {
  torch::manual_seed(24);
  DiGModel model(test::tiny_config());
  auto opt = make_optimizer(model->online_parameters(), OptimConfig{});
  auto batch = tiny_batch(4, 8);
  batch.indices = {11, 12, 13, 14};
  batch.augmented_view.index_put_({0, 0, 0, 0}, std::nanf(""));
  CHECK_THROWS_AS(pretrain_step(model, opt, batch, ObjectiveConfig{}, 1e-3), InvalidArgument);

  // A blown-up positional embedding overflows to inf inside the network.
  {
    torch::NoGradGuard g;
    model->encoder->pos_embed.fill_(3e38f);
  }
  auto ok = tiny_batch(4, 8);
  ok.indices = {11, 12, 13, 14};
  CHECK_THROWS_WITH_AS(pretrain_step(model, opt, ok, ObjectiveConfig{}, 1e-3), doctest::Contains("[11,12,13,14]"),
                       NumericalError);
}

TEST_CASE("checkpoints round-trip bitwise and reject damage") {
  test::TempDir dir("ckpt");
  Checkpoint ck;
  ck.kind = "test";
  ck.step = 42;
  ck.fingerprint = "fp";
  ck.config = {{"a", 1}};
  ck.extra = {{"b", "c"}};
  torch::manual_seed(25);
  ck.tensors = {{"x", torch::randn({3, 4})},
                {"y", torch::randn({5}, torch::kFloat64)},
                {"z", torch::tensor({true, false, true})},
                {"n", torch::arange(7, torch::kLong)},
                {"empty", torch::zeros({0, 3})}};
  save_checkpoint(ck, dir / "a.ckpt");
  const auto back = load_checkpoint(dir / "a.ckpt");
  CHECK(back.kind == "test");
  CHECK(back.step == 42);
  CHECK(back.fingerprint == "fp");
  CHECK(back.config == ck.config);
  CHECK(back.extra == ck.extra);
  REQUIRE(back.tensors.size() == ck.tensors.size());
  for (std::size_t i = 0; i < ck.tensors.size(); ++i) {
    CHECK(back.tensors[i].first == ck.tensors[i].first);
    CHECK(back.tensors[i].second.dtype() == ck.tensors[i].second.dtype());
    CHECK(torch::equal(back.tensors[i].second, ck.tensors[i].second));
  }
  CHECK(back.find("missing") == nullptr);
  CHECK_THROWS_AS(back.at("missing"), Mismatch);

  const std::string bytes = slurp(dir / "a.ckpt");
  {
    std::ofstream(dir / "trunc.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() - 10);
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "trunc.ckpt"), CorruptData);
  {
    std::string flipped = bytes;
    flipped[flipped.size() - 3] ^= 0x40;
    std::ofstream(dir / "flip.ckpt", std::ios::binary) << flipped;
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "flip.ckpt"), CorruptData);
  {
    std::ofstream(dir / "magic.ckpt", std::ios::binary) << "NOTACKPT" << bytes.substr(8);
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "magic.ckpt"), CorruptData);
  {
    std::string v2 = bytes;
    const auto at = v2.find("\"format_version\":1");
    REQUIRE(at != std::string::npos);
    v2[at + 17] = '2';
    std::ofstream(dir / "v2.ckpt", std::ios::binary) << v2;
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "v2.ckpt"), Mismatch);
  CHECK_THROWS_AS(load_checkpoint(dir / "none.ckpt"), IoError);
  CHECK_THROWS_AS(require_fingerprint(back, "other"), Mismatch);
}

TEST_CASE("checkpoints of another preset are rejected") {
  test::TempDir dir("preset");
  auto cfg = RunConfig::from_preset("desk");
  cfg.model = test::tiny_config();
  auto model = make_model(cfg);
  save_checkpoint(make_pretrain_checkpoint(model, nullptr, 0, cfg), dir / "tiny.ckpt");
  auto other = RunConfig::from_preset("desk");
  auto desk_model = make_model(other);
  CHECK_THROWS_AS(restore_pretrain(desk_model, nullptr, load_checkpoint(dir / "tiny.ckpt")), Mismatch);
}

TEST_CASE("pretrain runs are reproducible and resumable") {
  test::TempDir dir("pretrain");
  test::small_corpus(dir / "corpus", 10, false);
  const auto cfg = tiny_run(dir / "corpus" / kManifestFileName);

  const auto a = run_pretrain(cfg, dir / "a");
  run_pretrain(cfg, dir / "b");
  CHECK(a.steps_run == 6);
  const std::string metrics = slurp(dir / "a" / "metrics.csv");
  CHECK(metrics == slurp(dir / "b" / "metrics.csv"));
  CHECK(metrics.rfind("step,loss,loss_c,loss_m,lr\n1,", 0) == 0);
  CHECK(std::filesystem::exists(dir / "a" / "checkpoints" / "step_000003.ckpt"));
  CHECK(std::filesystem::exists(dir / "a" / "checkpoints" / "step_000006.ckpt"));

  auto resumed = cfg;
  resumed.pretrain.resume = (dir / "a" / "checkpoints" / "step_000003.ckpt").string();
  const auto c = run_pretrain(resumed, dir / "c");
  CHECK(c.steps_run == 3);
  std::string tail = metrics;
  {
    std::istringstream in(metrics);
    std::string line, out;
    while (std::getline(in, line))
      if (line.rfind("step", 0) == 0 || std::stoll(line.substr(0, line.find(','))) > 3) out += line + "\n";
    tail = out;
  }
  CHECK(slurp(dir / "c" / "metrics.csv") == tail);

  const auto ca = load_checkpoint(dir / "a" / "checkpoints" / "last.ckpt");
  const auto cc = load_checkpoint(dir / "c" / "checkpoints" / "last.ckpt");
  REQUIRE(ca.tensors.size() == cc.tensors.size());
  for (std::size_t i = 0; i < ca.tensors.size(); ++i)
    CHECK_MESSAGE(torch::equal(ca.tensors[i].second, cc.tensors[i].second), ca.tensors[i].first);

  // Resuming in place drops rows written after the checkpoint.
  auto inplace = resumed;
  run_pretrain(inplace, dir / "a");
  CHECK(slurp(dir / "a" / "metrics.csv") == metrics);
}

TEST_CASE("run config presets, overrides and file round trip") {
  test::TempDir dir("config");
  const auto desk = RunConfig::from_preset("desk");
  CHECK(desk.model.embed_dim == 96);
  CHECK(desk.objectives.alpha == 0.1);
  CHECK(desk.objectives.temperature == 0.2);
  CHECK(desk.objectives.momentum == 0.996);
  CHECK(desk.views.mask_ratio == 0.6);
  const auto full = RunConfig::from_preset("full");
  CHECK(full.pretrain.optim.batch_size == 1024);
  CHECK(full.pretrain.optim.lr == 1.5e-4);
  CHECK(full.pretrain.optim.warmup_steps == 5000);
  CHECK(full.finetune.optim.batch_size == 2048);
  CHECK(full.finetune.optim.beta2 == 0.999);
  CHECK_THROWS_AS(RunConfig::from_preset("laptop"), InvalidArgument);

  auto c = desk;
  apply_overrides(c, {"pretrain.optim.lr=5e-4", "name=abc", "objectives.mode=contrastive", "probe.optim.steps=20",
                      "probe.optim.warmup_steps=5"});
  CHECK(c.pretrain.optim.lr == 5e-4);
  CHECK(c.name == "abc");
  CHECK(c.objectives.mode == "contrastive");
  CHECK(c.hash() != desk.hash());
  CHECK_THROWS_AS(apply_overrides(c, {"pretrain.optim.nope=1"}), InvalidArgument);
  CHECK_THROWS_AS(apply_overrides(c, {"no_equals"}), InvalidArgument);
  CHECK_THROWS_AS(apply_overrides(c, {"views.mask_ratio=1.5"}), InvalidArgument);

  save_config(c, dir / "c.json");
  const auto back = load_config(dir / "c.json");
  CHECK(back.hash() == c.hash());
  {
    std::ofstream(dir / "bad.json") << R"({"pretrain": {"optim": {"lr": 1e-3, "typo": 1}}})";
  }
  CHECK_THROWS_AS(load_config(dir / "bad.json"), InvalidArgument);
  CHECK_THROWS_AS(load_config(dir / "missing.json"), IoError);
}
