#include "doctest_torch.hpp"

#include <cmath>
#include <functional>

#include "dig/decoders.hpp"
#include "dig/errors.hpp"
#include "support.hpp"

using namespace dig;

namespace {

std::string collapse(const std::vector<int64_t>& path, const TokenVocabulary& vocab) {
  std::vector<int64_t> kept;
  int64_t prev = -1;
  for (int64_t s : path) {
    if (s != prev && s != vocab.blank()) kept.push_back(s);
    prev = s;
  }
  return vocab.decode(kept);
}

/// -log p(label | logits) by enumerating every alignment over {blank} U label symbols.
double brute_ctc_nll(const torch::Tensor& logits, const std::string& label, const TokenVocabulary& vocab) {
  const auto lp = logits.to(torch::kFloat64).log_softmax(-1);
  std::vector<int64_t> alphabet{vocab.blank()};
  for (int64_t id : vocab.encode(label))
    if (std::find(alphabet.begin(), alphabet.end(), id) == alphabet.end()) alphabet.push_back(id);
  const int64_t t = logits.size(0);
  std::vector<int64_t> path(static_cast<std::size_t>(t));
  double total = 0.0;
  std::function<void(int64_t, double)> walk = [&](int64_t step, double logp) {
    if (step == t) {
      if (collapse(path, vocab) == label) total += std::exp(logp);
      return;
    }
    for (int64_t s : alphabet) {
      path[static_cast<std::size_t>(step)] = s;
      walk(step + 1, logp + lp.index({step, s}).item<double>());
    }
  };
  walk(0, 0.0);
  return -std::log(total);
}

}  // namespace

TEST_CASE("token vocabulary layout") {
  const TokenVocabulary v;
  CHECK(v.blank() == 0);
  CHECK(v.end() == 37);
  CHECK(v.start() == 38);
  CHECK(v.pad() == 39);
  CHECK(v.size() == 40);
  CHECK(v.ctc_classes() == 37);
  CHECK(v.encode("a9") == (std::vector<int64_t>{1, 36}));
  CHECK(v.decode({8, 5, 12, 12, 15}) == "hello");
  CHECK_THROWS_AS(v.encode("A"), InvalidArgument);
  CHECK_THROWS_AS(v.encode(""), InvalidArgument);
}

TEST_CASE("ctc greedy decode collapses repeats and drops blanks") {
  const TokenVocabulary v;
  auto one_hot = [&](const std::vector<int64_t>& ids) {
    auto t = torch::zeros({static_cast<int64_t>(ids.size()), 37});
    for (std::size_t i = 0; i < ids.size(); ++i) t.index_put_({static_cast<int64_t>(i), ids[i]}, 1.0f);
    return t;
  };
  CHECK(ctc_greedy_decode(one_hot({0, 0, 0}), v).empty());
  // "--hh-e-ll--llo"
  CHECK(ctc_greedy_decode(one_hot({0, 0, 8, 8, 0, 5, 0, 12, 12, 0, 0, 12, 12, 15}), v) == "hello");
  CHECK(ctc_greedy_decode(one_hot({1, 1, 1}), v) == "a");
  CHECK(ctc_greedy_decode(one_hot({1, 0, 1}), v) == "aa");
  CHECK_THROWS_AS(ctc_greedy_decode(torch::zeros({2, 3, 37}), v), InvalidArgument);
}

TEST_CASE("ctc loss matches alignment enumeration") {
  const TokenVocabulary v;
  torch::manual_seed(11);
  for (const std::string label : {"a", "ab", "aa", "ba"}) {
    const auto logits = torch::randn({1, 4, 37}, torch::kFloat64) * 2.0;
    const double got = ctc_loss(logits, {label}, v).item<double>();
    const double want = brute_ctc_nll(logits[0], label, v) / static_cast<double>(label.size());
    CHECK(got == doctest::Approx(want).epsilon(1e-9));
  }
  auto exact = torch::full({1, 3, 37}, -30.0, torch::kFloat64);
  exact.index_put_({0, 0, 1}, 30.0);
  exact.index_put_({0, 1, 2}, 30.0);
  exact.index_put_({0, 2, 0}, 30.0);
  CHECK(ctc_loss(exact, {"ab"}, v).item<double>() < 1e-6);
  CHECK_THROWS_AS(ctc_loss(torch::zeros({1, 2, 37}), {"abc"}, v), InvalidArgument);
  CHECK_THROWS_AS(ctc_loss(torch::zeros({2, 5, 37}), {"abc"}, v), InvalidArgument);
}

TEST_CASE("ctc head produces one distribution per column") {
  torch::manual_seed(12);
  CtcHead head(32);
  const auto f = torch::randn({2, 8, 32, 32});
  const auto logits = head.forward(f);
  CHECK(logits.sizes() == torch::IntArrayRef({2, 32, 37}));
  const auto out = head.infer(f);
  CHECK(out.texts.size() == 2);
  CHECK(head.loss(f, {"ab", "cd"}).item<double>() > 0.0);
}

TEST_CASE("attention decoder weights are distributions and decoding stays in the charset") {
  torch::manual_seed(13);
  AttentionDecoder dec(32);
  const auto f = torch::randn({2, 8, 32, 32});
  const auto fwd = dec.forward(f, {"abc", "de"});
  CHECK(fwd.logits.sizes() == torch::IntArrayRef({2, 4, 40}));
  CHECK(fwd.attention.sizes() == torch::IntArrayRef({2, 4, 256}));
  CHECK(torch::allclose(fwd.attention.sum(-1), torch::ones({2, 4}), 1e-5, 1e-5));
  CHECK((fwd.attention >= 0).all().item<bool>());

  dec.eval();
  const auto out = dec.infer(f);
  REQUIRE(out.texts.size() == 2);
  const Charset cs;
  for (const auto& t : out.texts) {
    CHECK(t.size() <= kMaxLabelLength);
    for (char c : t) CHECK(cs.contains(c));
  }
}

TEST_CASE("transformer decoder is causal") {
  torch::manual_seed(14);
  TransformerDecoder dec(32);
  dec.eval();
  torch::NoGradGuard g;
  const auto f = torch::randn({1, 8, 32, 32});
  auto ids = torch::tensor({38, 3, 7, 9, 11, 2}, torch::kLong).unsqueeze(0);
  const auto base = dec.forward_ids(f, ids);
  CHECK(base.sizes() == torch::IntArrayRef({1, 6, 40}));
  for (int64_t k = 1; k < 6; ++k) {
    auto changed = ids.clone();
    changed.index_put_({0, k}, 20);
    const auto moved = dec.forward_ids(f, changed);
    using torch::indexing::Slice;
    CHECK(torch::equal(moved.index({0, Slice(0, k)}), base.index({0, Slice(0, k)})));
  }
  const auto fwd = dec.forward(f, {"abc"});
  CHECK(fwd.logits.sizes() == torch::IntArrayRef({1, 4, 40}));
  CHECK_THROWS_AS(dec.forward(f, {"ABC"}), InvalidArgument);
}

TEST_CASE("recognition heads overfit a single sample") {
  for (const std::string kind : {"ctc", "attention", "transformer"}) {
    torch::manual_seed(15);
    auto head = make_recognition_head(kind, 32);
    CHECK(head->kind() == kind);
    const auto f = torch::randn({1, 8, 32, 32});
    torch::optim::Adam opt(head->parameters(), torch::optim::AdamOptions(3e-3));
    std::string decoded;
    for (int step = 0; step < 300 && decoded != "text"; ++step) {
      opt.zero_grad();
      head->train();
      head->loss(f, {"text"}).backward();
      opt.step();
      head->eval();
      torch::NoGradGuard g;
      decoded = head->infer(f).texts.at(0);
    }
    CHECK_MESSAGE(decoded == "text", kind);
  }
  CHECK_THROWS_AS(make_recognition_head("rnn", 32), InvalidArgument);
}

TEST_CASE("segmentation and super-resolution heads") {
  torch::manual_seed(16);
  SegmentationHead seg(32);
  const auto f = torch::randn({2, 8, 32, 32});
  const auto m = seg(f);
  CHECK(m.sizes() == torch::IntArrayRef({2, 32, 128}));
  CHECK((m >= 0).all().item<bool>());
  CHECK((m <= 1).all().item<bool>());

  SuperResolutionHead sr(32);
  const auto y = sr(f);
  CHECK(y.sizes() == torch::IntArrayRef({2, 32, 128, 3}));
  CHECK((y >= 0).all().item<bool>());
  CHECK((y <= 1).all().item<bool>());
  CHECK(sr->loss(f, sr->forward_raw(f).detach()).item<double>() == 0.0);
  CHECK(seg->loss(f, seg(f).detach()).item<double>() == 0.0);
}
