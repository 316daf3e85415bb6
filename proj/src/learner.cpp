#include "puma/learner.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace puma {

TabularMDM::TabularMDM(int length_, Vocab vocab_, double lr)
    : length(length_), vocab(vocab_), learning_rate(lr) {
  if (length < 1) throw ContractViolation("TabularMDM: length must be >= 1");
  if (!(lr > 0.0)) throw ContractViolation("TabularMDM: lr must be positive");
  if (!key_space_fits(vocab, length))
    throw ContractViolation("TabularMDM: context keys exceed 64 bits");
}

namespace {

void softmax_into(const double* logits, int n, std::vector<double>& out) {
  out.resize(static_cast<std::size_t>(n));
  double max_logit = logits[0];
  for (int v = 1; v < n; ++v) max_logit = std::max(max_logit, logits[v]);
  double total = 0.0;
  for (int v = 0; v < n; ++v) {
    out[static_cast<std::size_t>(v)] = std::exp(logits[v] - max_logit);
    total += out[static_cast<std::size_t>(v)];
  }
  for (double& p : out) p /= total;
}

}  // namespace

PosteriorTable TabularMDM::forward(const MaskedSequence& z) const {
  if (static_cast<int>(z.size()) != length)
    throw ContractViolation("forward: context length mismatch");
  ++forward_calls_;

  PosteriorTable table;
  table.indices = masked_indices(vocab, z);
  if (table.indices.empty()) return table;

  const auto it = logits.find(context_key(vocab, z));
  const std::vector<double>* row_block = it == logits.end() ? nullptr : &it->second;
  static const double kZero = 0.0;

  table.rows.resize(table.indices.size());
  std::vector<double> zeros;
  if (row_block == nullptr)
    zeros.assign(static_cast<std::size_t>(vocab.size), 0.0);
  for (std::size_t r = 0; r < table.indices.size(); ++r) {
    const double* src =
        row_block ? row_block->data() +
                        static_cast<std::size_t>(table.indices[r]) *
                            static_cast<std::size_t>(vocab.size)
                  : zeros.data();
    (void)kZero;
    softmax_into(src, vocab.size, table.rows[r].probs);
  }
  return table;
}

std::vector<double> TabularMDM::logit_row(const MaskedSequence& z,
                                          int position) const {
  const auto it = logits.find(context_key(vocab, z));
  if (it == logits.end())
    return std::vector<double>(static_cast<std::size_t>(vocab.size), 0.0);
  const auto base = static_cast<std::size_t>(position) *
                    static_cast<std::size_t>(vocab.size);
  return std::vector<double>(it->second.begin() + static_cast<std::ptrdiff_t>(base),
                             it->second.begin() +
                                 static_cast<std::ptrdiff_t>(base + static_cast<std::size_t>(vocab.size)));
}

double loss_and_grad_from_table(const PosteriorTable& table, const Vocab& vocab,
                                const MaskedSequence& z, const Sequence& x0,
                                Gradients& grads) {
  if (z.size() != x0.size())
    throw ContractViolation("loss_and_grad: length mismatch");
  for (std::size_t i = 0; i < z.size(); ++i)
    if (!vocab.is_mask(z[i]) && z[i] != x0[i])
      throw ContractViolation(
          "loss_and_grad: z disagrees with x0 on an unmasked index");
  if (table.empty())
    throw ContractViolation("loss_and_grad: no masked positions");

  const std::uint64_t key = context_key(vocab, z);
  const double inv_masked = 1.0 / static_cast<double>(table.size());
  double loss = 0.0;
  for (std::size_t r = 0; r < table.size(); ++r) {
    const int i = table.indices[r];
    const Token target = x0[static_cast<std::size_t>(i)];
    const std::vector<double>& p = table.rows[r].probs;
    loss += -std::log(p[static_cast<std::size_t>(target)]) * inv_masked;

    GradRow row;
    row.key = key;
    row.position = i;
    row.values = p;
    row.values[static_cast<std::size_t>(target)] -= 1.0;
    for (double& g : row.values) g *= inv_masked;
    grads.push_back(std::move(row));
  }
  return loss;
}

std::pair<double, Gradients> loss_and_grad(const TabularMDM& model,
                                           const MaskedSequence& z,
                                           const Sequence& x0) {
  Gradients grads;
  const PosteriorTable table = model.forward(z);
  const double loss = loss_and_grad_from_table(table, model.vocab, z, x0, grads);
  return {loss, std::move(grads)};
}

void sgd_update(TabularMDM& model, const Gradients& grads) {
  const auto row_len = static_cast<std::size_t>(model.length) *
                       static_cast<std::size_t>(model.vocab.size);
  for (const GradRow& row : grads) {
    auto [it, inserted] = model.logits.try_emplace(row.key);
    if (inserted) it->second.assign(row_len, 0.0);
    double* dst = it->second.data() + static_cast<std::size_t>(row.position) *
                                          static_cast<std::size_t>(model.vocab.size);
    for (int v = 0; v < model.vocab.size; ++v)
      dst[v] -= model.learning_rate * row.values[static_cast<std::size_t>(v)];
  }
}

double vanilla_train_step(TabularMDM& model, const TabularDistribution& dist,
                          Rng& rng) {
  for (;;) {
    const Sequence& x0 = sample(dist, rng);
    const double t = rng.uniform();
    MaskedSequence z = iid_mask(dist.vocab, x0, t, rng);
    if (fully_unmasked(dist.vocab, z)) continue;  // resample: nothing to learn
    auto [loss, grads] = loss_and_grad(model, z, x0);
    sgd_update(model, grads);
    return loss;
  }
}

double vanilla_train_batch(TabularMDM& model, const TabularDistribution& dist,
                           int batch, Rng& rng) {
  if (batch < 1) throw ContractViolation("vanilla_train_batch: batch >= 1");
  Gradients grads;
  double loss_sum = 0.0;
  for (int j = 0; j < batch; ++j) {
    for (;;) {
      const Sequence& x0 = sample(dist, rng);
      const double t = rng.uniform();
      MaskedSequence z = iid_mask(dist.vocab, x0, t, rng);
      if (fully_unmasked(dist.vocab, z)) continue;
      const PosteriorTable table = model.forward(z);
      loss_sum += loss_and_grad_from_table(table, dist.vocab, z, x0, grads);
      break;
    }
  }
  sgd_update(model, grads);
  return loss_sum / batch;
}

int stage_of(int unmasked, int l_eff, int k) {
  if (k < 1) throw ContractViolation("stage_of: K must be >= 1");
  if (l_eff < 1) throw ContractViolation("stage_of: l_eff must be >= 1");
  if (unmasked <= 0) return 0;
  if (unmasked >= l_eff) return k;
  const long long num = static_cast<long long>(unmasked) * k;
  long long n = (num + l_eff - 1) / l_eff - 1;  // smallest n with count <= l_eff*(n+1)/K
  return n < 0 ? 0 : static_cast<int>(n);
}

int stage_of(const Vocab& vocab, const MaskedSequence& z, int prompt_len,
             int k) {
  const int l_eff = static_cast<int>(z.size()) - prompt_len;
  return stage_of(count_unmasked(vocab, z) - prompt_len, l_eff, k);
}

int next_reveal_count(int unmasked, int stage, int k, int l_eff, Rng& rng) {
  if (stage >= k)
    throw ContractViolation("next_reveal_count: chain already at stage K");
  const double lo = static_cast<double>(stage + 1) / k;
  const double hi = static_cast<double>(stage + 2) / k;
  double r = rng.uniform(lo, hi);
  if (r > 1.0) r = 1.0;
  const int target = static_cast<int>(std::llround(l_eff * r));
  const int du = std::max(1, target - unmasked);
  return std::min(du, l_eff - unmasked);
}

void KSchedule::validate() const {
  if (k0 < 1) throw ContractViolation("KSchedule: k0 must be >= 1");
  if (k_max < k0) throw ContractViolation("KSchedule: k_max must be >= k0");
  if (increment < 0) throw ContractViolation("KSchedule: increment >= 0");
  if (period_steps < 1) throw ContractViolation("KSchedule: period >= 1");
}

int k_schedule(long step, const KSchedule& sched) {
  sched.validate();
  if (step < 0) throw ContractViolation("k_schedule: negative step");
  const long k = sched.k0 + static_cast<long>(sched.increment) *
                                (step / sched.period_steps);
  return static_cast<int>(std::min<long>(k, sched.k_max));
}

PumaTrainer::PumaTrainer(TabularMDM& model, const TabularDistribution& dist,
                         PolicySpec policy, KSchedule schedule,
                         std::optional<double> tau, int batch, Rng rng,
                         int prompt_len)
    : model_(&model),
      dist_(&dist),
      policy_(policy),
      schedule_(schedule),
      tau_(tau),
      prompt_len_(prompt_len),
      rng_(rng) {
  if (batch < 1) throw ContractViolation("PumaTrainer: batch must be >= 1");
  if (prompt_len < 0 || prompt_len >= dist.length)
    throw ContractViolation("PumaTrainer: prompt_len out of range");
  schedule_.validate();
  policy_.validate(dist.length);
  if (tau_ && !(*tau_ > 0.0 && *tau_ <= 1.0))
    throw ContractViolation("PumaTrainer: tau must lie in (0,1]");
  buffer_.resize(static_cast<std::size_t>(batch));
  const int k0 = k_schedule(0, schedule_);
  for (ChainState& c : buffer_) refill(c, k0);
}

void PumaTrainer::refill(ChainState& c, int k_now) {
  c.x0 = sample(*dist_, rng_);
  c.z.assign(c.x0.size(), dist_->vocab.mask());
  for (int i = 0; i < prompt_len_; ++i)
    c.z[static_cast<std::size_t>(i)] = c.x0[static_cast<std::size_t>(i)];
  c.stage = 0;
  c.chain_k = k_now;
  c.prompt_len = prompt_len_;
}

double PumaTrainer::step() {
  const int k_now = k_schedule(steps_done_, schedule_);
  const int l_eff = dist_->length - prompt_len_;
  const std::size_t batch = buffer_.size();

  // Line 2-3: one forward per example, loss, single summed update. The
  // tables are kept: the chain advance below reuses them as policy scores
  // (pre-update logits, exactly the quantities the loss saw).
  std::vector<PosteriorTable> tables(batch);
  Gradients grads;
  double loss_sum = 0.0;
  for (std::size_t j = 0; j < batch; ++j) {
    tables[j] = model_->forward(buffer_[j].z);
    if (!tables[j].empty())
      loss_sum += loss_and_grad_from_table(tables[j], dist_->vocab,
                                           buffer_[j].z, buffer_[j].x0, grads);
  }
  sgd_update(*model_, grads);

  // Lines 5-10: refill completed chains, advance the rest.
  for (std::size_t j = 0; j < batch; ++j) {
    ChainState& c = buffer_[j];
    if (c.stage == c.chain_k) {
      refill(c, k_now);
      continue;
    }
    const int unmasked = count_unmasked(dist_->vocab, c.z) - prompt_len_;
    const int du =
        next_reveal_count(unmasked, c.stage, c.chain_k, l_eff, rng_);
    IndexSet reveal =
        select(policy_, tables[j], c.z, dist_->vocab, du, &rng_);
    if (tau_)
      reveal = threshold_augment(reveal, tables[j], c.z, dist_->vocab, *tau_,
                                 policy_.block_size);
    c.z = teacher_forced_step(dist_->vocab, c.x0, c.z, reveal);
    c.stage = stage_of(dist_->vocab, c.z, prompt_len_, c.chain_k);
  }

  ++steps_done_;
  return loss_sum / static_cast<double>(batch);
}

Trajectory stage_chain(const Vocab& vocab, const Sequence& x0,
                       const ScoreFn& scores, const PolicySpec& policy, int k,
                       std::optional<double> tau, Rng& rng, int prompt_len) {
  if (k < 1) throw ContractViolation("stage_chain: K must be >= 1");
  const int length = static_cast<int>(x0.size());
  const int l_eff = length - prompt_len;

  Trajectory traj;
  traj.length = length;
  traj.steps = k;
  traj.prompt_len = prompt_len;
  MaskedSequence z(static_cast<std::size_t>(length), vocab.mask());
  for (int i = 0; i < prompt_len; ++i)
    z[static_cast<std::size_t>(i)] = x0[static_cast<std::size_t>(i)];
  traj.states.push_back(z);

  int stage = 0;
  for (int j = 1; j <= k; ++j) {
    if (stage == k) {
      traj.states.push_back(traj.states.back());
      continue;
    }
    const MaskedSequence& cur = traj.states.back();
    const int unmasked = count_unmasked(vocab, cur) - prompt_len;
    const int du = next_reveal_count(unmasked, stage, k, l_eff, rng);
    PosteriorTable table = scores(cur);
    IndexSet reveal = select(policy, table, cur, vocab, du, &rng);
    if (tau)
      reveal = threshold_augment(reveal, table, cur, vocab, *tau,
                                 policy.block_size);
    for (int i : reveal)
      traj.events.push_back({j, i, x0[static_cast<std::size_t>(i)]});
    traj.states.push_back(teacher_forced_step(vocab, x0, cur, reveal));
    stage = stage_of(vocab, traj.states.back(), prompt_len, k);
  }
  return traj;
}

ScoreFn model_score_fn(const TabularMDM& model) {
  return [&model](const MaskedSequence& z) { return model.forward(z); };
}

void save_model(const TabularMDM& model, std::ostream& out) {
  out << "puma-mdm " << model.length << ' ' << model.vocab.size << ' ';
  char lr_buf[64];
  std::snprintf(lr_buf, sizeof lr_buf, "%.17g", model.learning_rate);
  out << lr_buf << '\n';

  // Deterministic order: sorted keys, then masked positions ascending.
  std::map<std::uint64_t, const std::vector<double>*> ordered;
  for (const auto& [key, rows] : model.logits) ordered.emplace(key, &rows);
  char buf[64];
  for (const auto& [key, rows] : ordered) {
    const MaskedSequence z = key_to_state(model.vocab, model.length, key);
    for (int i = 0; i < model.length; ++i) {
      if (!model.vocab.is_mask(z[static_cast<std::size_t>(i)])) continue;
      out << key << ' ' << i;
      const double* row = rows->data() + static_cast<std::size_t>(i) *
                                             static_cast<std::size_t>(
                                                 model.vocab.size);
      for (int v = 0; v < model.vocab.size; ++v) {
        std::snprintf(buf, sizeof buf, "%.17g", row[v]);
        out << ' ' << buf;
      }
      out << '\n';
    }
  }
}

TabularMDM load_model(std::istream& in) {
  std::string magic;
  int length = 0, vocab_size = 0;
  double lr = 0.0;
  if (!(in >> magic >> length >> vocab_size >> lr) || magic != "puma-mdm")
    throw ContractViolation("load_model: bad header");
  TabularMDM model(length, Vocab(vocab_size), lr);

  const auto row_len = static_cast<std::size_t>(length) *
                       static_cast<std::size_t>(vocab_size);
  std::uint64_t key;
  int position;
  while (in >> key >> position) {
    if (position < 0 || position >= length)
      throw ContractViolation("load_model: bad position");
    auto [it, inserted] = model.logits.try_emplace(key);
    if (inserted) it->second.assign(row_len, 0.0);
    double* dst = it->second.data() +
                  static_cast<std::size_t>(position) *
                      static_cast<std::size_t>(vocab_size);
    for (int v = 0; v < vocab_size; ++v)
      if (!(in >> dst[v])) throw ContractViolation("load_model: short row");
  }
  return model;
}

}  // namespace puma
