#include "dig/optim.hpp"

#include <cmath>
#include <numbers>

#include "dig/errors.hpp"

namespace dig {

double lr_at(int64_t step, int64_t warmup, int64_t total, double base) {
  if (total <= 0 || warmup < 0 || warmup > total)
    throw InvalidArgument("schedule needs 0 <= warmup <= total and total > 0");
  if (step < 0 || step > total)
    throw InvalidArgument("step " + std::to_string(step) + " outside [0, " + std::to_string(total) + "]");
  if (step < warmup) return base * static_cast<double>(step) / static_cast<double>(warmup);
  if (total == warmup) return base;
  const double progress = static_cast<double>(step - warmup) / static_cast<double>(total - warmup);
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

bool decays(const std::string& name, const torch::Tensor& param) {
  auto ends_with = [&](const std::string& suffix) {
    return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  if (ends_with("pos_embed") || ends_with("mask_token")) return false;
  return param.dim() >= 2;
}

AdamW::AdamW(std::vector<std::pair<std::string, torch::Tensor>> params, AdamWOptions options)
    : params_(std::move(params)), options_(options) {
  for (const auto& [name, p] : params_) {
    if (moments_.count(name)) throw InvalidArgument("duplicate parameter name " + name);
    moments_[name] = {torch::zeros_like(p), torch::zeros_like(p)};
  }
}

void AdamW::step(double lr) {
  if (!(lr >= 0.0)) throw InvalidArgument("learning rate must be >= 0");
  torch::NoGradGuard guard;
  ++step_count_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));
  for (auto& [name, p] : params_) {
    const auto& g = p.grad();
    if (!g.defined()) continue;
    auto& [m, v] = moments_.at(name);
    if (options_.weight_decay != 0.0 && decays(name, p)) p.mul_(1.0 - lr * options_.weight_decay);
    m.mul_(b1).add_(g, 1.0 - b1);
    v.mul_(b2).addcmul_(g, g, 1.0 - b2);
    auto denom = (v.sqrt() / std::sqrt(bc2)).add_(options_.eps);
    p.addcdiv_(m, denom, -lr / bc1);
  }
}

void AdamW::zero_grad() {
  for (auto& [name, p] : params_) {
    auto& g = p.mutable_grad();
    if (g.defined()) g = torch::Tensor();
  }
}

std::vector<std::pair<std::string, torch::Tensor>> AdamW::state() const {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& [name, p] : params_) {
    const auto& [m, v] = moments_.at(name);
    out.emplace_back("exp_avg." + name, m);
    out.emplace_back("exp_avg_sq." + name, v);
  }
  return out;
}

void AdamW::load_state(const std::vector<std::pair<std::string, torch::Tensor>>& state, int64_t step_count) {
  std::map<std::string, torch::Tensor> lookup(state.begin(), state.end());
  torch::NoGradGuard guard;
  for (auto& [name, p] : params_) {
    auto& [m, v] = moments_.at(name);
    for (auto [key, dst] : {std::pair{"exp_avg." + name, m}, std::pair{"exp_avg_sq." + name, v}}) {
      auto it = lookup.find(key);
      if (it == lookup.end()) throw Mismatch("optimizer state is missing " + key);
      if (!it->second.sizes().equals(dst.sizes())) throw Mismatch("optimizer state " + key + " has the wrong shape");
      dst.copy_(it->second);
    }
  }
  step_count_ = step_count;
}

double clip_grad_norm(const std::vector<std::pair<std::string, torch::Tensor>>& params, double max_norm) {
  torch::NoGradGuard guard;
  double total = 0.0;
  for (const auto& [name, p] : params)
    if (p.grad().defined()) total += p.grad().to(torch::kDouble).square().sum().item<double>();
  const double norm = std::sqrt(total);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / (norm + 1e-6);
    for (const auto& [name, p] : params)
      if (p.grad().defined()) p.mutable_grad().mul_(scale);
  }
  return norm;
}

}  // namespace dig
