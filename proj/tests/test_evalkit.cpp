#include "doctest_torch.hpp"

#include <cmath>
#include <fstream>

#include "dig/errors.hpp"
#include "dig/evalkit.hpp"
#include "dig/finetune.hpp"
#include "dig/reconstruct.hpp"
#include "dig/trainer.hpp"
#include "fixtures.hpp"
#include "support.hpp"

using namespace dig;

TEST_CASE("word accuracy with case folding and punctuation stripping") {
  CHECK(word_accuracy({"abc", "de"}, {"abc", "de"}) == 1.0);
  CHECK(word_accuracy({"abc", "xx"}, {"abc", "de"}) == 0.5);
  CHECK(word_accuracy({"ABC!"}, {"abc"}) == 1.0);
  EvalProtocol strict{false, false};
  CHECK(word_accuracy({"ABC"}, {"abc"}, strict) == 0.0);
  CHECK(normalize("Hello, World") == "helloworld");
  CHECK(normalize(normalize("A-b.C")) == normalize("A-b.C"));
  CHECK_THROWS_AS(word_accuracy({"a"}, {"a", "b"}), InvalidArgument);
  CHECK_THROWS_AS(word_accuracy({}, {}), InvalidArgument);
}

TEST_CASE("iou hand cases") {
  auto gt = torch::zeros({4, 4});
  gt.index_put_({0, torch::indexing::Slice()}, 1.0f);
  CHECK(iou(gt, gt) == 1.0);
  auto disjoint = torch::zeros({4, 4});
  disjoint.index_put_({3, torch::indexing::Slice()}, 1.0f);
  CHECK(iou(disjoint, gt) == 0.0);
  auto wider = gt.clone();
  wider.index_put_({1, torch::indexing::Slice()}, 1.0f);
  CHECK(iou(wider, gt) == 0.5);
  CHECK(iou(torch::zeros({4, 4}), torch::zeros({4, 4})) == 1.0);
  CHECK(iou(torch::full({4, 4}, 0.5f), gt) == 0.25);
  CHECK(iou(torch::full({4, 4}, 0.49f), gt) == 0.0);
  CHECK_THROWS_AS(iou(torch::zeros({4, 4}), torch::zeros({4, 5})), InvalidArgument);

  Image a(2, 2, 1, 0.0f), b(2, 2, 1, 0.0f);
  a.at(0, 0) = 1.0f;
  a.at(0, 1) = 1.0f;
  b.at(0, 0) = 1.0f;
  CHECK(iou(a, b) == 0.5);
}

TEST_CASE("psnr and ssim basics") {
  CHECK(psnr_from_mse(0.01) == 20.0);
  CHECK(psnr_from_mse(1.0) == 0.0);
  CHECK(psnr_from_mse(0.0) == kPsnrCap);
  CHECK_THROWS_AS(psnr_from_mse(-1.0), InvalidArgument);
  const Image a = test::random_image(1), b = test::random_image(2);
  CHECK(psnr(a, a) == kPsnrCap);
  CHECK(psnr(a, b) == psnr(b, a));
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-12));
  CHECK(ssim(a, b) < 0.5);
  CHECK_THROWS_AS(ssim(Image(10, 10, 3), Image(10, 10, 3)), InvalidArgument);
  CHECK_THROWS_AS(psnr(a, Image(10, 10, 3)), InvalidArgument);
  Image c(32, 128, 3, 0.0f), d(32, 128, 3, 0.1f);
  CHECK(psnr(c, d) == doctest::Approx(20.0).epsilon(1e-6));
}

TEST_CASE("psnr and ssim agree with the reference fixtures") {
  const auto cases = test::metric_cases();
  REQUIRE(cases.size() == 20);
  for (const auto& c : cases) {
    CHECK_MESSAGE(std::abs(psnr(c.a, c.b) - c.psnr) <= 1e-9, c.name);
    CHECK_MESSAGE(std::abs(ssim(c.a, c.b) - c.ssim) <= 1e-6, c.name);
  }
}

TEST_CASE("probe reports are deterministic and complete") {
  test::TempDir dir("probe");
  test::small_corpus(dir / "c", 20);
  auto cfg = RunConfig::from_preset("desk");
  cfg.model = test::tiny_config();
  cfg.probe.manifest = (dir / "c" / kManifestFileName).string();
  cfg.probe.optim.batch_size = 8;
  cfg.probe.optim.steps = 5;
  cfg.probe.optim.warmup_steps = 1;
  const auto a = run_probe(cfg);
  const auto b = run_probe(cfg);
  CHECK(a.to_json() == b.to_json());
  const auto j = a.to_json();
  for (const char* key : {"checkpoint", "decoder", "accuracy", "train_accuracy", "split_sizes", "seed"})
    CHECK_MESSAGE(j.contains(key), key);
  CHECK(j["checkpoint"].is_null());
  CHECK(a.train_size == 18);
  CHECK(a.heldout_size == 2);
  CHECK(a.accuracy >= 0.0);
  CHECK(a.accuracy <= 1.0);

  cfg.probe.manifest.clear();
  CHECK_THROWS_AS(run_probe(cfg), InvalidArgument);
}

TEST_CASE("dataset splits are seeded and disjoint") {
  const auto s = split_dataset(100, 0.9, 3);
  CHECK(s.train.size() == 90);
  CHECK(s.heldout.size() == 10);
  std::set<std::size_t> all(s.train.begin(), s.train.end());
  all.insert(s.heldout.begin(), s.heldout.end());
  CHECK(all.size() == 100);
  CHECK(split_dataset(100, 0.9, 3).heldout == s.heldout);
  CHECK(split_dataset(100, 0.9, 4).heldout != s.heldout);
  CHECK_THROWS_AS(split_dataset(100, 1.5, 3), InvalidArgument);
}

TEST_CASE("freeze policies") {
  test::TempDir dir("freeze");
  test::small_corpus(dir / "c", 12);
  for (const std::string policy : {"encoder", "all-but-self-attention"}) {
    auto cfg = RunConfig::from_preset("desk");
    cfg.model = test::tiny_config();
    cfg.finetune.manifest = (dir / "c" / kManifestFileName).string();
    cfg.finetune.freeze = policy;
    cfg.finetune.optim.batch_size = 4;
    cfg.finetune.optim.steps = 3;
    cfg.finetune.optim.warmup_steps = 1;
    const auto before = make_encoder(cfg.model, "", cfg.seed);
    const auto result = run_finetune(cfg, dir / policy);
    const auto after = load_checkpoint(result.checkpoint);
    bool any_changed = false;
    for (const auto& item : before->named_parameters()) {
      const auto& now = after.at("encoder." + item.key());
      const bool same = torch::equal(now, item.value());
      if (policy == "encoder" || item.key().find(".attn.") == std::string::npos)
        CHECK_MESSAGE(same, item.key());
      any_changed = any_changed || !same;
    }
    CHECK(any_changed == (policy != "encoder"));
  }
  VitEncoder enc(test::tiny_config());
  CHECK_THROWS_AS(apply_freeze(enc, "half"), InvalidArgument);
}

TEST_CASE("finetune and eval cover every task") {
  test::TempDir dir("tasks");
  test::small_corpus(dir / "c", 12);
  const auto manifest = (dir / "c" / kManifestFileName).string();
  for (const std::string task :
       {"recognition-ctc", "recognition-attn", "recognition-transformer", "segmentation", "super-resolution"}) {
    auto cfg = RunConfig::from_preset("desk");
    cfg.model = test::tiny_config();
    cfg.finetune.manifest = manifest;
    cfg.finetune.task = task;
    cfg.finetune.optim.batch_size = 4;
    cfg.finetune.optim.steps = 2;
    cfg.finetune.optim.warmup_steps = 1;
    const auto run = dir / task;
    const auto ft = run_finetune(cfg, run);
    CHECK(std::filesystem::exists(ft.checkpoint));
    cfg.eval.checkpoint = ft.checkpoint.string();
    cfg.eval.manifest = manifest;
    const auto report = run_eval(cfg, dir / (task + "-eval"));
    if (is_recognition(task)) {
      CHECK(report.contains("word_accuracy"));
      CHECK(std::filesystem::exists(dir / (task + "-eval") / "reports" / "predictions.tsv"));
    } else if (task == "segmentation") {
      CHECK(report.contains("mean_iou"));
    } else {
      CHECK(report.contains("mean_psnr"));
      CHECK(report.contains("mean_ssim"));
    }
  }
}

TEST_CASE("super-resolution inputs are degraded copies of the target") {
  const Image img = render_word("scale", 3).image.pixels;
  const Image low = degrade(img, 2);
  CHECK(low.same_shape(img));
  CHECK_FALSE(low == img);
  CHECK(psnr(low, img) > 15.0);
  CHECK_THROWS_AS(degrade(img, 0), InvalidArgument);
}

TEST_CASE("reconstruction panels and scores") {
  const Image orig = render_word("panel", 1).image.pixels;
  const auto mask = sample_mask(8, 32, 0.6, 1);
  const Image panel = make_panel(orig, mask, orig);
  CHECK(panel.height() == 32);
  CHECK(panel.width() == 3 * 128 + 2 * 4);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 128; ++x) {
      CHECK(panel.at(y, x, 0) == orig.at(y, x, 0));
      CHECK(panel.at(y, 2 * (128 + 4) + x, 1) == orig.at(y, x, 1));
      const bool masked = mask.at(y / 4, x / 4);
      if (masked) CHECK(panel.at(y, 128 + 4 + x, 2) == 0.5f);
      else CHECK(panel.at(y, 128 + 4 + x, 2) == orig.at(y, x, 2));
    }

  test::TempDir dir("recon");
  test::small_corpus(dir / "c", 6, false);
  auto cfg = RunConfig::from_preset("desk");
  cfg.model = test::tiny_config();
  auto model = make_model(cfg);
  save_checkpoint(make_pretrain_checkpoint(model, nullptr, 0, cfg), dir / "m.ckpt");
  cfg.reconstruct.checkpoint = (dir / "m.ckpt").string();
  cfg.reconstruct.manifest = (dir / "c" / kManifestFileName).string();
  cfg.reconstruct.panels = 3;
  cfg.reconstruct.eval_count = 4;
  const auto r = run_reconstruct(cfg, dir / "run");
  CHECK(r.count == 4);
  CHECK(r.panels.size() == 3);
  CHECK(r.mse > 0.0);
  CHECK(r.baseline_mse > 0.0);
  CHECK(std::filesystem::exists(dir / "run" / "panels" / "panel_000.png"));
  CHECK(std::filesystem::exists(dir / "run" / "reports" / "reconstruct.json"));
  CHECK(run_reconstruct(cfg, dir / "run2").mse == r.mse);
}
