#include "fvqa/optim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>

namespace fvqa::optim {

namespace {

// [0, 1) with 53 random bits; identical across standard libraries.
double uniform_double(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// -ln sigmoid(x) = softplus(-x); max/log1p form avoids overflow for large
// |x|.
double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_bounds(const ToyPolicy& policy, const TokenSeq& sequence) {
  for (const auto& [context, token] : sequence) {
    if (context < 0 || context >= policy.context_size || token < 0 ||
        token >= policy.vocab_size) {
      throw std::out_of_range("token step (" + std::to_string(context) + ", " +
                              std::to_string(token) + ") out of bounds");
    }
  }
}

std::vector<double> softmax_probs(const ToyPolicy& policy, int context) {
  const int V = policy.vocab_size;
  std::vector<double> probs(static_cast<std::size_t>(V));
  double max_logit = -std::numeric_limits<double>::infinity();
  for (int v = 0; v < V; ++v) {
    max_logit = std::max(max_logit, policy.logit(context, v));
  }
  double sum = 0.0;
  for (int v = 0; v < V; ++v) {
    probs[static_cast<std::size_t>(v)] =
        std::exp(policy.logit(context, v) - max_logit);
    sum += probs[static_cast<std::size_t>(v)];
  }
  for (double& p : probs) {
    p /= sum;
  }
  return probs;
}

// grad[context, .] += coeff * (e_token - probs)
void add_logprob_grad(std::vector<double>& grad, const ToyPolicy& policy,
                      int context, int token,
                      const std::vector<double>& probs, double coeff) {
  const std::size_t base =
      static_cast<std::size_t>(context) *
      static_cast<std::size_t>(policy.vocab_size);
  for (int v = 0; v < policy.vocab_size; ++v) {
    grad[base + static_cast<std::size_t>(v)] -=
        coeff * probs[static_cast<std::size_t>(v)];
  }
  grad[base + static_cast<std::size_t>(token)] += coeff;
}

double global_norm(const std::vector<double>& v) {
  double sum = 0.0;
  for (double x : v) {
    sum += x * x;
  }
  return std::sqrt(sum);
}

void clip_global_norm(std::vector<double>& grad, double clip) {
  if (clip <= 0.0) {
    return;
  }
  const double norm = global_norm(grad);
  if (norm > clip) {
    const double scale = clip / norm;
    for (double& g : grad) {
      g *= scale;
    }
  }
}

double lr_at(const TrainConfig& config, int step) {
  if (config.schedule == LrSchedule::linear_decay) {
    return config.lr *
           (1.0 - static_cast<double>(step) / static_cast<double>(config.steps));
  }
  return config.lr;
}

void check_train_config(const TrainConfig& config) {
  if (config.steps < 1) {
    throw std::invalid_argument("steps must be >= 1");
  }
  if (config.lr < 0.0) {
    throw std::invalid_argument("lr must be non-negative");
  }
  if (config.grad_clip < 0.0) {
    throw std::invalid_argument("grad_clip must be non-negative");
  }
}

int sample_token(const std::vector<double>& probs, std::mt19937_64& rng) {
  const double u = uniform_double(rng);
  double cumulative = 0.0;
  for (std::size_t v = 0; v + 1 < probs.size(); ++v) {
    cumulative += probs[v];
    if (u < cumulative) {
      return static_cast<int>(v);
    }
  }
  return static_cast<int>(probs.size()) - 1;
}

int argmax(const std::vector<double>& values) {
  return static_cast<int>(
      std::max_element(values.begin(), values.end()) - values.begin());
}

}  // namespace

double ToyPolicy::logit(int context, int token) const {
  return logits[static_cast<std::size_t>(context) *
                    static_cast<std::size_t>(vocab_size) +
                static_cast<std::size_t>(token)];
}

double& ToyPolicy::logit(int context, int token) {
  return logits[static_cast<std::size_t>(context) *
                    static_cast<std::size_t>(vocab_size) +
                static_cast<std::size_t>(token)];
}

std::vector<double> ToyPolicy::log_probs(int context) const {
  if (context < 0 || context >= context_size) {
    throw std::out_of_range("context " + std::to_string(context) +
                            " out of bounds");
  }
  const int V = vocab_size;
  std::vector<double> out(static_cast<std::size_t>(V));
  double max_logit = -std::numeric_limits<double>::infinity();
  for (int v = 0; v < V; ++v) {
    max_logit = std::max(max_logit, logit(context, v));
  }
  double sum = 0.0;
  for (int v = 0; v < V; ++v) {
    sum += std::exp(logit(context, v) - max_logit);
  }
  const double log_z = max_logit + std::log(sum);
  for (int v = 0; v < V; ++v) {
    out[static_cast<std::size_t>(v)] = logit(context, v) - log_z;
  }
  return out;
}

ToyPolicy ToyPolicy::uniform(int vocab_size, int context_size) {
  if (vocab_size < 1 || context_size < 1) {
    throw std::invalid_argument("vocab_size and context_size must be >= 1");
  }
  ToyPolicy policy;
  policy.vocab_size = vocab_size;
  policy.context_size = context_size;
  policy.logits.assign(
      static_cast<std::size_t>(vocab_size) * static_cast<std::size_t>(context_size),
      0.0);
  return policy;
}

ToyPolicy ToyPolicy::random(int vocab_size, int context_size,
                            std::uint64_t seed, double scale) {
  ToyPolicy policy = uniform(vocab_size, context_size);
  std::mt19937_64 rng(seed);
  for (double& z : policy.logits) {
    // Box-Muller from explicit uniforms; std::normal_distribution is not
    // pinned by the standard.
    const double u1 = std::max(uniform_double(rng), 1e-300);
    const double u2 = uniform_double(rng);
    z = scale * std::sqrt(-2.0 * std::log(u1)) *
        std::cos(2.0 * 3.14159265358979323846 * u2);
  }
  return policy;
}

double sequence_logprob(const ToyPolicy& policy, const TokenSeq& sequence) {
  check_bounds(policy, sequence);
  double total = 0.0;
  for (const auto& [context, token] : sequence) {
    total += policy.log_probs(context)[static_cast<std::size_t>(token)];
  }
  return total;
}

GradReport sequence_logprob_report(const ToyPolicy& policy,
                                   const TokenSeq& sequence) {
  check_bounds(policy, sequence);
  GradReport report;
  report.gradient.assign(static_cast<std::size_t>(policy.param_count()), 0.0);
  for (const auto& [context, token] : sequence) {
    const auto probs = softmax_probs(policy, context);
    report.loss += std::log(probs[static_cast<std::size_t>(token)]);
    add_logprob_grad(report.gradient, policy, context, token, probs, 1.0);
  }
  return report;
}

double dpo_pair_loss(double logp_chosen, double logp_rejected, double beta) {
  if (beta <= 0.0) {
    throw std::invalid_argument("beta must be positive");
  }
  const double margin = logp_chosen - logp_rejected;
  return softplus(-beta * margin);
}

double dpo_batch_loss(std::span<const std::pair<double, double>> pairs,
                      double beta) {
  if (pairs.empty()) {
    throw std::invalid_argument("dpo_batch_loss requires a non-empty batch");
  }
  double sum = 0.0;
  for (const auto& [logp_chosen, logp_rejected] : pairs) {
    sum += dpo_pair_loss(logp_chosen, logp_rejected, beta);
  }
  return sum / static_cast<double>(pairs.size());
}

std::vector<double> grpo_advantages(std::span<const int> rewards,
                                    bool normalize_std) {
  if (rewards.empty()) {
    throw std::invalid_argument("grpo_advantages requires a non-empty list");
  }
  long long sum = 0;
  for (int r : rewards) {
    sum += r;
  }
  const double mean =
      static_cast<double>(sum) / static_cast<double>(rewards.size());
  std::vector<double> advantages(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    advantages[i] = static_cast<double>(rewards[i]) - mean;
  }
  if (normalize_std) {
    double var = 0.0;
    for (double a : advantages) {
      var += a * a;
    }
    const double sd = std::sqrt(var / static_cast<double>(rewards.size()));
    if (sd > 0.0) {
      for (double& a : advantages) {
        a /= sd;
      }
    }
  }
  return advantages;
}

double grpo_group_loss(std::span<const double> advantages,
                       std::span<const double> logps) {
  if (advantages.size() != logps.size()) {
    throw std::invalid_argument("advantages/logps length mismatch");
  }
  double dot = 0.0;
  for (std::size_t i = 0; i < advantages.size(); ++i) {
    dot += advantages[i] * logps[i];
  }
  return -dot;
}

double sft_loss(const ToyPolicy& policy, const TokenSeq& target) {
  return -sequence_logprob(policy, target);
}

GradReport dpo_batch_report(const ToyPolicy& policy,
                            std::span<const DpoPairSeq> pairs, double beta,
                            const ToyPolicy* reference) {
  if (pairs.empty()) {
    throw std::invalid_argument("dpo_batch_report requires a non-empty batch");
  }
  if (beta <= 0.0) {
    throw std::invalid_argument("beta must be positive");
  }
  GradReport report;
  report.gradient.assign(static_cast<std::size_t>(policy.param_count()), 0.0);
  const double inv_n = 1.0 / static_cast<double>(pairs.size());

  for (const auto& pair : pairs) {
    const auto chosen = sequence_logprob_report(policy, pair.chosen);
    const auto rejected = sequence_logprob_report(policy, pair.rejected);
    double margin = chosen.loss - rejected.loss;
    if (reference != nullptr) {
      margin -= sequence_logprob(*reference, pair.chosen) -
                sequence_logprob(*reference, pair.rejected);
    }
    report.loss += softplus(-beta * margin) * inv_n;
    // d/d margin of softplus(-beta*margin) = -beta * sigmoid(-beta*margin)
    const double coeff = -beta * stable_sigmoid(-beta * margin) * inv_n;
    for (std::size_t p = 0; p < report.gradient.size(); ++p) {
      report.gradient[p] +=
          coeff * (chosen.gradient[p] - rejected.gradient[p]);
    }
  }
  return report;
}

GradReport grpo_group_report(const ToyPolicy& policy,
                             std::span<const TokenSeq> group,
                             std::span<const double> advantages) {
  if (group.size() != advantages.size()) {
    throw std::invalid_argument("group/advantages length mismatch");
  }
  GradReport report;
  report.gradient.assign(static_cast<std::size_t>(policy.param_count()), 0.0);
  for (std::size_t i = 0; i < group.size(); ++i) {
    const auto lp = sequence_logprob_report(policy, group[i]);
    report.loss -= advantages[i] * lp.loss;
    for (std::size_t p = 0; p < report.gradient.size(); ++p) {
      report.gradient[p] -= advantages[i] * lp.gradient[p];
    }
  }
  return report;
}

GradReport sft_report(const ToyPolicy& policy, const TokenSeq& target) {
  auto lp = sequence_logprob_report(policy, target);
  GradReport report;
  report.loss = -lp.loss;
  report.gradient.resize(lp.gradient.size());
  for (std::size_t p = 0; p < lp.gradient.size(); ++p) {
    report.gradient[p] = -lp.gradient[p];
  }
  return report;
}

double grad_check(const DiffableLoss& loss, const ToyPolicy& at,
                  double epsilon) {
  if (epsilon < 1e-7 || epsilon > 1e-3) {
    throw std::invalid_argument("epsilon must lie in [1e-7, 1e-3]");
  }
  const auto analytic = loss.gradient(at);
  if (analytic.size() != static_cast<std::size_t>(at.param_count())) {
    throw std::invalid_argument("gradient length != parameter count");
  }
  ToyPolicy probe = at;
  double max_rel_err = 0.0;
  for (std::size_t p = 0; p < analytic.size(); ++p) {
    const double saved = probe.logits[p];
    probe.logits[p] = saved + epsilon;
    const double up = loss.value(probe);
    probe.logits[p] = saved - epsilon;
    const double down = loss.value(probe);
    probe.logits[p] = saved;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double rel_err =
        std::abs(analytic[p] - numeric) / std::max(1.0, std::abs(numeric));
    max_rel_err = std::max(max_rel_err, rel_err);
  }
  return max_rel_err;
}

GradReport grad_check_report(const DiffableLoss& loss, const ToyPolicy& at,
                             double epsilon) {
  GradReport report;
  report.loss = loss.value(at);
  report.gradient = loss.gradient(at);
  report.max_rel_err = grad_check(loss, at, epsilon);
  return report;
}

std::string history_csv(const TrainHistory& history) {
  std::string out = "step,loss,mean_reward,learning_rate\n";
  char buffer[128];
  for (const auto& step : history.steps) {
    std::snprintf(buffer, sizeof(buffer), "%d,%.10g,%.10g,%.10g\n", step.step,
                  step.loss, step.mean_reward, step.learning_rate);
    out += buffer;
  }
  return out;
}

void save_history_csv(const std::filesystem::path& path,
                      const TrainHistory& history) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("unwritable path " + path.string());
  }
  out << history_csv(history);
}

double SyntheticTask::accuracy(const ToyPolicy& policy) const {
  if (correct.empty()) {
    return 0.0;
  }
  int hits = 0;
  for (int c = 0; c < num_contexts(); ++c) {
    if (argmax(policy.log_probs(c)) == correct[static_cast<std::size_t>(c)]) {
      ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(num_contexts());
}

SyntheticTask SyntheticTask::make(int vocab_size, int num_contexts,
                                  std::uint64_t seed) {
  if (vocab_size < 2 || num_contexts < 1) {
    throw std::invalid_argument("task needs vocab_size >= 2, contexts >= 1");
  }
  SyntheticTask task;
  task.vocab_size = vocab_size;
  task.correct.resize(static_cast<std::size_t>(num_contexts));
  std::mt19937_64 rng(seed);
  for (int& token : task.correct) {
    token = static_cast<int>(rng() % static_cast<std::uint64_t>(vocab_size));
  }
  return task;
}

std::vector<TokenSeq> make_sft_targets(const SyntheticTask& task) {
  std::vector<TokenSeq> targets;
  targets.reserve(task.correct.size());
  for (int c = 0; c < task.num_contexts(); ++c) {
    targets.push_back({{c, task.correct[static_cast<std::size_t>(c)]}});
  }
  return targets;
}

std::vector<DpoPairSeq> make_dpo_pairs(const SyntheticTask& task, int count,
                                       std::uint64_t seed) {
  if (count < 1) {
    throw std::invalid_argument("count must be >= 1");
  }
  std::mt19937_64 rng(seed);
  std::vector<DpoPairSeq> pairs;
  pairs.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const int c = i % task.num_contexts();
    const int good = task.correct[static_cast<std::size_t>(c)];
    int bad = static_cast<int>(rng() % static_cast<std::uint64_t>(task.vocab_size));
    if (bad == good) {
      bad = (bad + 1) % task.vocab_size;
    }
    pairs.push_back(DpoPairSeq{{{c, good}}, {{c, bad}}});
  }
  return pairs;
}

TrainResult train_toy_sft(ToyPolicy policy, std::span<const TokenSeq> targets,
                          const TrainConfig& config) {
  check_train_config(config);
  if (targets.empty()) {
    throw std::invalid_argument("sft training requires targets");
  }
  TrainResult result;
  const double inv_n = 1.0 / static_cast<double>(targets.size());
  for (int step = 0; step < config.steps; ++step) {
    const double lr = lr_at(config, step);
    std::vector<double> grad(static_cast<std::size_t>(policy.param_count()), 0.0);
    double loss = 0.0;
    int token_hits = 0;
    int token_total = 0;
    for (const auto& target : targets) {
      const auto report = sft_report(policy, target);
      loss += report.loss * inv_n;
      for (std::size_t p = 0; p < grad.size(); ++p) {
        grad[p] += report.gradient[p] * inv_n;
      }
      for (const auto& [context, token] : target) {
        token_hits += argmax(policy.log_probs(context)) == token ? 1 : 0;
        ++token_total;
      }
    }
    clip_global_norm(grad, config.grad_clip);
    for (std::size_t p = 0; p < grad.size(); ++p) {
      policy.logits[p] -= lr * grad[p];
    }
    result.history.steps.push_back(TrainStep{
        step, loss,
        token_total > 0
            ? static_cast<double>(token_hits) / static_cast<double>(token_total)
            : 0.0,
        lr});
  }
  result.policy = std::move(policy);
  return result;
}

TrainResult train_toy_dpo(ToyPolicy policy, std::span<const DpoPairSeq> pairs,
                          const TrainConfig& config) {
  check_train_config(config);
  if (pairs.empty()) {
    throw std::invalid_argument("dpo training requires pairs");
  }
  const ToyPolicy reference = policy;  // frozen initial policy
  const ToyPolicy* ref_ptr =
      config.use_reference_policy ? &reference : nullptr;

  TrainResult result;
  for (int step = 0; step < config.steps; ++step) {
    const double lr = lr_at(config, step);
    auto report = dpo_batch_report(policy, pairs, config.beta, ref_ptr);
    int preferred = 0;
    for (const auto& pair : pairs) {
      if (sequence_logprob(policy, pair.chosen) >
          sequence_logprob(policy, pair.rejected)) {
        ++preferred;
      }
    }
    clip_global_norm(report.gradient, config.grad_clip);
    for (std::size_t p = 0; p < report.gradient.size(); ++p) {
      policy.logits[p] -= lr * report.gradient[p];
    }
    result.history.steps.push_back(TrainStep{
        step, report.loss,
        static_cast<double>(preferred) / static_cast<double>(pairs.size()),
        lr});
  }
  result.policy = std::move(policy);
  return result;
}

TrainResult train_toy_grpo(ToyPolicy policy, const SyntheticTask& task,
                           const TrainConfig& config) {
  check_train_config(config);
  if (config.group_size < 2) {
    throw std::invalid_argument("group_size must be >= 2");
  }
  if (task.num_contexts() < 1 || task.vocab_size != policy.vocab_size ||
      task.num_contexts() > policy.context_size) {
    throw std::invalid_argument("task does not fit the policy");
  }
  std::mt19937_64 rng(config.seed);
  const int m = config.group_size;
  const double inv_groups = 1.0 / static_cast<double>(task.num_contexts());

  TrainResult result;
  for (int step = 0; step < config.steps; ++step) {
    const double lr = lr_at(config, step);
    std::vector<double> grad(static_cast<std::size_t>(policy.param_count()), 0.0);
    double loss = 0.0;
    long long reward_sum = 0;

    for (int c = 0; c < task.num_contexts(); ++c) {
      const auto probs = softmax_probs(policy, c);
      const auto log_probs = policy.log_probs(c);
      std::vector<int> tokens(static_cast<std::size_t>(m));
      std::vector<int> rewards(static_cast<std::size_t>(m));
      for (int i = 0; i < m; ++i) {
        tokens[static_cast<std::size_t>(i)] = sample_token(probs, rng);
        rewards[static_cast<std::size_t>(i)] =
            tokens[static_cast<std::size_t>(i)] ==
                    task.correct[static_cast<std::size_t>(c)]
                ? 1
                : 0;
        reward_sum += rewards[static_cast<std::size_t>(i)];
      }
      const auto advantages =
          grpo_advantages(rewards, config.normalize_advantages);
      for (int i = 0; i < m; ++i) {
        const int token = tokens[static_cast<std::size_t>(i)];
        loss -= advantages[static_cast<std::size_t>(i)] *
                log_probs[static_cast<std::size_t>(token)] * inv_groups;
        add_logprob_grad(grad, policy, c, token, probs,
                         -advantages[static_cast<std::size_t>(i)] * inv_groups);
      }
    }

    clip_global_norm(grad, config.grad_clip);
    for (std::size_t p = 0; p < grad.size(); ++p) {
      policy.logits[p] -= lr * grad[p];
    }
    result.history.steps.push_back(TrainStep{
        step, loss,
        static_cast<double>(reward_sum) /
            static_cast<double>(static_cast<long long>(m) * task.num_contexts()),
        lr});
  }
  result.policy = std::move(policy);
  return result;
}

}  // namespace fvqa::optim
