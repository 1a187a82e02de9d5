#include "doctest_torch.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include "dig/errors.hpp"
#include "dig/model.hpp"
#include "support.hpp"

using namespace dig;

namespace {

bool bit_equal(const torch::Tensor& a, const torch::Tensor& b) { return torch::equal(a, b); }

}  // namespace

TEST_CASE("patchify orders patch vectors by row, column, channel") {
  const auto img = test::random_images(2, 1);
  const auto p = patchify(img);
  REQUIRE(p.sizes() == torch::IntArrayRef({2, 256, 48}));
  auto a = img.accessor<float, 4>();
  auto q = p.accessor<float, 3>();
  for (int b = 0; b < 2; ++b)
    for (int r : {0, 3, 7})
      for (int c : {0, 17, 31})
        for (int i = 0; i < 4; ++i)
          for (int j = 0; j < 4; ++j)
            for (int ch = 0; ch < 3; ++ch)
              CHECK(q[b][r * 32 + c][(i * 4 + j) * 3 + ch] == a[b][4 * r + i][4 * c + j][ch]);
  CHECK(bit_equal(unpatchify(p), img));

  auto pm = torch::zeros({1, 8, 32}, torch::kBool);
  pm.index_put_({0, 2, 5}, true);
  const auto px = pixel_mask(pm);
  CHECK(px.sum().item<int64_t>() == 16);
  CHECK(px.index({0, torch::indexing::Slice(8, 12), torch::indexing::Slice(20, 24)}).all().item<bool>());
}

TEST_CASE("encoder config presets and validation") {
  CHECK(EncoderConfig::from_preset("small").embed_dim == 384);
  CHECK(EncoderConfig::from_preset("base").heads == 8);
  CHECK(EncoderConfig::from_preset("tiny").depth == 12);
  CHECK(EncoderConfig::from_preset("desk").fingerprint() == "vit-p4-32x128:d96:L4:h4:mlp4:proj512x256");
  CHECK_THROWS_AS(EncoderConfig::from_preset("huge"), InvalidArgument);
  auto c = EncoderConfig::from_preset("desk");
  c.heads = 5;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  CHECK_THROWS_AS(VitEncoder{c}, InvalidArgument);
}

TEST_CASE("mask tokens replace exactly the masked embeddings") {
  torch::manual_seed(0);
  VitEncoder enc(test::tiny_config());
  const auto img = test::random_images(2, 3);
  const auto plain = enc->embed_patches(img);
  const auto none = enc->embed_patches(img, torch::zeros({2, 8, 32}, torch::kBool));
  CHECK(bit_equal(plain, none));

  auto mask = mask_tensor({sample_mask(8, 32, 0.6, 1), sample_mask(8, 32, 0.6, 2)});
  const auto masked = enc->embed_patches(img, mask).reshape({2, 8, 32, -1});
  const auto ref = plain.reshape({2, 8, 32, -1});
  const auto token = enc->mask_token.reshape({-1});
  for (int b = 0; b < 2; ++b)
    for (int r = 0; r < 8; ++r)
      for (int c = 0; c < 32; ++c) {
        const auto got = masked.index({b, r, c});
        if (mask.index({b, r, c}).item<bool>()) CHECK(bit_equal(got, token));
        else CHECK(bit_equal(got, ref.index({b, r, c})));
      }

  const auto all = enc->embed_patches(img, torch::ones({2, 8, 32}, torch::kBool));
  CHECK(bit_equal(all, token.expand_as(all)));
  // Pixels under masked patches cannot influence the embedding.
  auto perturbed = img.clone();
  const auto px = pixel_mask(mask).unsqueeze(-1).expand_as(img);
  perturbed.masked_fill_(px, 0.123f);
  CHECK(bit_equal(enc->embed_tokens(perturbed, mask), enc->embed_tokens(img, mask)));
}

TEST_CASE("encoder output shape, identity at depth zero, rejects bad input") {
  torch::manual_seed(1);
  auto cfg = test::tiny_config();
  VitEncoder enc(cfg);
  const auto img = test::random_images(3, 4);
  const auto f = enc(img);
  CHECK(f.sizes() == torch::IntArrayRef({3, 8, 32, cfg.embed_dim}));
  CHECK(torch::isfinite(f).all().item<bool>());

  cfg.depth = 0;
  VitEncoder flat(cfg);
  CHECK(bit_equal(flat(img), flat->embed_tokens(img).reshape({3, 8, 32, cfg.embed_dim})));

  CHECK_THROWS_AS(enc(torch::rand({1, 32, 100, 3})), InvalidArgument);
  auto nan = img.clone();
  nan.index_put_({0, 0, 0, 0}, std::nanf(""));
  CHECK_THROWS_AS(enc(nan), InvalidArgument);
}

TEST_CASE("patch head mean-pools four column windows") {
  CHECK(bit_equal(patch_head(torch::ones({2, 8, 32, 5})), torch::ones({2, 4, 5})));
  auto f = torch::zeros({1, 8, 32, 3});
  f.index_put_({0, torch::indexing::Slice(), torch::indexing::Slice(0, 8), torch::indexing::Slice()}, 2.0f);
  const auto p = patch_head(f);
  CHECK(p.index({0, 0}).eq(2.0f).all().item<bool>());
  CHECK(p.index({0, torch::indexing::Slice(1, 4)}).eq(0.0f).all().item<bool>());

  const auto r = torch::randn({2, 8, 32, 4}, torch::kFloat64);
  const auto got = patch_head(r);
  for (int b = 0; b < 2; ++b)
    for (int i = 0; i < 4; ++i)
      for (int d = 0; d < 4; ++d) {
        double s = 0;
        for (int y = 0; y < 8; ++y)
          for (int x = 8 * i; x < 8 * i + 8; ++x) s += r.index({b, y, x, d}).item<double>();
        CHECK(got.index({b, i, d}).item<double>() == doctest::Approx(s / 64.0).epsilon(1e-12));
      }
  CHECK_THROWS_AS(patch_head(torch::zeros({1, 8, 30, 3})), InvalidArgument);
}

TEST_CASE("projection and prediction keep instances independent") {
  torch::manual_seed(2);
  DiGModel model(test::tiny_config());
  model->eval();
  const auto img = test::random_images(2, 5);
  const auto out = model->queries(img);
  CHECK(out.queries.sizes() == torch::IntArrayRef({2, 4, 256}));
  CHECK(torch::allclose(out.queries.norm(2, -1), torch::ones({2, 4}), 1e-5, 1e-5));

  auto feature = out.feature.detach().clone();
  const auto base = model->predict(model->project(feature));
  auto changed = feature.clone();
  changed.index({0, torch::indexing::Slice(), torch::indexing::Slice(0, 8)}).add_(1.0f);
  const auto moved = model->predict(model->project(changed));
  CHECK_FALSE(bit_equal(moved.index({0, 0}), base.index({0, 0})));
  CHECK(bit_equal(moved.index({0, torch::indexing::Slice(1, 4)}), base.index({0, torch::indexing::Slice(1, 4)})));
  CHECK(bit_equal(moved.index({1}), base.index({1})));
}

TEST_CASE("reconstruction head is a per-token linear map") {
  torch::manual_seed(3);
  DiGModel model(test::tiny_config());
  const auto& fc = model->recon_head->fc;
  {
    torch::NoGradGuard g;
    fc->weight.zero_();
    fc->bias.copy_(torch::arange(48, torch::kFloat32));
  }
  const auto out = model->reconstruct(torch::randn({1, 8, 32, 32}));
  const auto block = patchify(out);
  CHECK(bit_equal(block, torch::arange(48, torch::kFloat32).expand({1, 256, 48})));

  torch::manual_seed(4);
  DiGModel m2(test::tiny_config());
  const auto feature = torch::randn({1, 8, 32, 32});
  const auto base = m2->reconstruct(feature);
  auto changed = feature.clone();
  changed.index({0, 3, 10}).add_(1.0f);
  auto diff = (m2->reconstruct(changed) - base).ne(0).any(-1).squeeze(0);
  CHECK(diff.sum().item<int64_t>() > 0);
  using torch::indexing::Slice;
  CHECK(diff.index({Slice(12, 16), Slice(40, 44)}).any().item<bool>());
  diff.index_put_({Slice(12, 16), Slice(40, 44)}, false);
  CHECK_FALSE(diff.any().item<bool>());
}

TEST_CASE("momentum branch mirrors the online branch and never receives gradients") {
  torch::manual_seed(5);
  DiGModel model(test::tiny_config());
  const auto pairs = model->momentum_pairs();
  CHECK(pairs.size() == model->momentum->parameters().size());
  for (const auto& [t, s] : pairs) {
    CHECK(bit_equal(t, s));
    CHECK_FALSE(t.requires_grad());
  }
  const auto names = model->named_parameters();
  CHECK(names.contains("encoder.block1.attn.qkv.weight"));
  CHECK(names.contains("momentum.encoder.block1.attn.qkv.weight"));
  CHECK(names.contains("encoder.mask_token"));
  CHECK(names.contains("recon_head.fc.weight"));
  for (const auto& [name, p] : model->online_parameters()) CHECK(name.rfind("momentum.", 0) != 0);

  model->eval();
  const auto img = test::random_images(2, 6);
  const auto keys = model->momentum_keys(img);
  CHECK(keys.sizes() == torch::IntArrayRef({2, 4, 256}));
  CHECK_FALSE(keys.requires_grad());
  CHECK(bit_equal(keys, model->project(model->encoder(img)).detach()));

  const auto q = model->queries(img).queries;
  (q * keys).sum().backward();
  for (const auto& p : model->momentum->parameters()) CHECK_FALSE(p.grad().defined());
  bool any = false;
  for (const auto& p : model->encoder->parameters()) any = any || (p.grad().defined() && p.grad().abs().sum().item<double>() > 0);
  CHECK(any);
}

TEST_CASE("EMA update endpoints and interpolation") {
  torch::manual_seed(6);
  DiGModel model(test::tiny_config());
  {
    torch::NoGradGuard g;
    for (const auto& [t, s] : model->momentum_pairs()) {
      t.fill_(1.0f);
      s.fill_(0.0f);
    }
  }
  model->ema_update(1.0);
  for (const auto& [t, s] : model->momentum_pairs()) CHECK(t.eq(1.0f).all().item<bool>());
  model->ema_update(0.9);
  for (const auto& [t, s] : model->momentum_pairs()) CHECK(torch::allclose(t, torch::full_like(t, 0.9f), 0, 1e-7));
  model->ema_update(0.0);
  for (const auto& [t, s] : model->momentum_pairs()) CHECK(bit_equal(t, s));
  CHECK_THROWS_AS(model->ema_update(1.5), InvalidArgument);
  CHECK_THROWS_AS(model->ema_update(-0.1), InvalidArgument);
}
