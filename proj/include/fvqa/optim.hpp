#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace fvqa::optim {

// Small categorical sequence model: independent softmax over vocab_size
// tokens at each of context_size positions. Parameters are the raw logits.
struct ToyPolicy {
  int vocab_size = 0;
  int context_size = 0;
  std::vector<double> logits;  // row-major [context][token]

  double logit(int context, int token) const;
  double& logit(int context, int token);

  // Normalized log-probabilities for one context.
  std::vector<double> log_probs(int context) const;

  int param_count() const { return vocab_size * context_size; }

  static ToyPolicy uniform(int vocab_size, int context_size);
  static ToyPolicy random(int vocab_size, int context_size, std::uint64_t seed,
                          double scale = 1.0);
};

// One generation step: which context the token was emitted in, and the token.
using TokenStep = std::pair<int, int>;
using TokenSeq = std::vector<TokenStep>;

struct GradReport {
  double loss = 0.0;
  std::vector<double> gradient;  // flat, aligned with ToyPolicy::logits
  std::optional<double> max_rel_err;
};

// Sum over steps of log softmax(logits[context])[token]. Indices out of
// bounds throw std::out_of_range. Empty sequences yield 0.
double sequence_logprob(const ToyPolicy& policy, const TokenSeq& sequence);

// Value plus the analytic gradient d logprob / d logits.
GradReport sequence_logprob_report(const ToyPolicy& policy,
                                   const TokenSeq& sequence);

// -ln sigmoid(beta * (logp_chosen - logp_rejected)), evaluated in the
// numerically stable softplus form. Strictly positive and strictly
// decreasing in the log-probability margin.
double dpo_pair_loss(double logp_chosen, double logp_rejected, double beta);

// Arithmetic mean of pair losses in input order.
double dpo_batch_loss(std::span<const std::pair<double, double>> pairs,
                      double beta);

// A_i = r_i - mean(r). With normalize_std the advantages are additionally
// divided by the population standard deviation (guarded against zero).
std::vector<double> grpo_advantages(std::span<const int> rewards,
                                    bool normalize_std = false);

// -sum_i A_i * logp_i.
double grpo_group_loss(std::span<const double> advantages,
                       std::span<const double> logps);

// Negative log-likelihood of the target sequence.
double sft_loss(const ToyPolicy& policy, const TokenSeq& target);

struct DpoPairSeq {
  TokenSeq chosen;
  TokenSeq rejected;
};

// Loss + analytic gradient of the batch losses as functions of the policy
// parameters. reference, when given, is the frozen comparison policy for the
// reference-anchored DPO variant.
GradReport dpo_batch_report(const ToyPolicy& policy,
                            std::span<const DpoPairSeq> pairs, double beta,
                            const ToyPolicy* reference = nullptr);
GradReport grpo_group_report(const ToyPolicy& policy,
                             std::span<const TokenSeq> group,
                             std::span<const double> advantages);
GradReport sft_report(const ToyPolicy& policy, const TokenSeq& target);

// A scalar loss over policy parameters together with its analytic gradient.
struct DiffableLoss {
  std::function<double(const ToyPolicy&)> value;
  std::function<std::vector<double>(const ToyPolicy&)> gradient;
};

// Central finite differences per parameter; relative error is
// |analytic - numeric| / max(1, |numeric|); returns the maximum over
// parameters. epsilon must lie in [1e-7, 1e-3].
double grad_check(const DiffableLoss& loss, const ToyPolicy& at,
                  double epsilon);

// Same check, bundled with the loss value and analytic gradient at the
// probe point (max_rel_err is set).
GradReport grad_check_report(const DiffableLoss& loss, const ToyPolicy& at,
                             double epsilon);

struct TrainStep {
  int step = 0;
  double loss = 0.0;
  double mean_reward = 0.0;
  double learning_rate = 0.0;
};

struct TrainHistory {
  std::vector<TrainStep> steps;
};

// "step,loss,mean_reward,learning_rate" header plus one row per step.
std::string history_csv(const TrainHistory& history);
void save_history_csv(const std::filesystem::path& path,
                      const TrainHistory& history);

enum class LrSchedule { constant, linear_decay };

struct TrainConfig {
  double lr = 0.5;
  int steps = 500;
  double grad_clip = 1.0;
  LrSchedule schedule = LrSchedule::linear_decay;
  std::uint64_t seed = 0;
  double beta = 0.1;            // dpo
  int group_size = 4;           // grpo
  bool use_reference_policy = false;   // dpo only; anchors margins to the
                                       // initial policy
  bool normalize_advantages = false;   // grpo only; std-normalizes rewards
};

// 4-way single-token answer task: one designated correct token per context.
struct SyntheticTask {
  int vocab_size = 4;
  std::vector<int> correct;  // per context

  int num_contexts() const { return static_cast<int>(correct.size()); }
  double accuracy(const ToyPolicy& policy) const;  // argmax == correct

  static SyntheticTask make(int vocab_size, int num_contexts,
                            std::uint64_t seed);
};

// Target sequences / preference pairs derived from a task, for the sft and
// dpo toy stages.
std::vector<TokenSeq> make_sft_targets(const SyntheticTask& task);
std::vector<DpoPairSeq> make_dpo_pairs(const SyntheticTask& task, int count,
                                       std::uint64_t seed);

struct TrainResult {
  ToyPolicy policy;
  TrainHistory history;
};

// Plain gradient descent with global-norm clipping and the configured
// learning-rate schedule. Deterministic for a fixed seed. mean_reward per
// step is the stage metric: token argmax accuracy (sft), fraction of pairs
// with logp+ > logp- (dpo), or the empirical mean sampled reward (grpo).
TrainResult train_toy_sft(ToyPolicy policy, std::span<const TokenSeq> targets,
                          const TrainConfig& config);
TrainResult train_toy_dpo(ToyPolicy policy, std::span<const DpoPairSeq> pairs,
                          const TrainConfig& config);
// Samples group_size chains per context from the current policy each step.
TrainResult train_toy_grpo(ToyPolicy policy, const SyntheticTask& task,
                           const TrainConfig& config);

}  // namespace fvqa::optim
