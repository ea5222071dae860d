#include "irlab/policy.hpp"

#include <cmath>

#include "irlab/errors.hpp"
#include "irlab/rng.hpp"

namespace irlab {

PolicyModel::PolicyModel(const StateSpace& space, Kind kind, double tau)
    : space_(&space), kind_(kind), tau_(tau) {
  if (!(tau > 0.0)) throw Error("temperature must be > 0");
  row_of_state_.assign(space.size(), -1);
  for (int id = 0; id < space.size(); ++id)
    if (!space.terminal(id)) row_of_state_[id] = num_rows_++;
}

PolicyModel PolicyModel::tabular(const StateSpace& space, double tau) {
  PolicyModel p(space, Kind::tabular, tau);
  p.params_ = Vec::Zero(static_cast<Eigen::Index>(p.num_rows_) * space.vocab());
  return p;
}

PolicyModel PolicyModel::tabular_random(const StateSpace& space, double lo, double hi,
                                        std::uint64_t seed, double tau) {
  PolicyModel p = tabular(space, tau);
  Rng rng(seed);
  for (Eigen::Index i = 0; i < p.params_.size(); ++i) p.params_[i] = rng.uniform(lo, hi);
  return p;
}

void PolicyModel::build_features() {
  const StateSpace& sp = *space_;
  const int vocab = sp.vocab();
  const int horizon = sp.mdp().horizon;
  feat_dim_ = sp.num_prompts() + horizon * vocab;
  features_ = Mat::Zero(num_rows_, feat_dim_);
  for (int id = 0; id < sp.size(); ++id) {
    const int row = row_of_state_[id];
    if (row < 0) continue;
    const State& s = sp.state(id);
    features_(row, s.prompt_id) = 1.0;
    for (int t = 0; t < s.depth(); ++t)
      features_(row, sp.num_prompts() + t * vocab + s.response[t]) = 1.0;
  }
}

PolicyModel PolicyModel::featurized(const StateSpace& space, int hidden, std::uint64_t seed,
                                    double tau) {
  if (hidden < 1) throw Error("featurized policy needs hidden width >= 1");
  PolicyModel p(space, Kind::featurized, tau);
  p.hidden_ = hidden;
  p.build_features();
  const int vocab = space.vocab();
  const Eigen::Index n = static_cast<Eigen::Index>(hidden) * p.feat_dim_ + hidden +
                         static_cast<Eigen::Index>(vocab) * hidden + vocab;
  p.params_ = Vec::Zero(n);
  Rng rng(seed);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(p.feat_dim_));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  Eigen::Index k = 0;
  for (; k < static_cast<Eigen::Index>(hidden) * p.feat_dim_; ++k)
    p.params_[k] = rng.uniform(-s1, s1);
  k += hidden;  // b1 stays zero
  for (; k < n - vocab; ++k) p.params_[k] = rng.uniform(-s2, s2);
  return p;
}

void PolicyModel::set_params(const Vec& p) {
  if (p.size() != params_.size()) throw Error("set_params: size mismatch");
  params_ = p;
}

Vec PolicyModel::logits(int state_id) const {
  const int row = row_of_state_[state_id];
  if (row < 0) throw Error("logits requested at a terminal state");
  const int vocab = space_->vocab();
  if (kind_ == Kind::tabular) {
    return params_.segment(static_cast<Eigen::Index>(row) * vocab, vocab);
  }
  const auto w1 = Eigen::Map<const Mat>(params_.data(), hidden_, feat_dim_);
  const auto b1 = params_.segment(static_cast<Eigen::Index>(hidden_) * feat_dim_, hidden_);
  const auto w2 = Eigen::Map<const Mat>(
      params_.data() + static_cast<Eigen::Index>(hidden_) * feat_dim_ + hidden_, vocab, hidden_);
  const auto b2 = params_.tail(vocab);
  const Vec h = (w1 * features_.row(row).transpose() + b1).array().tanh();
  return w2 * h + b2;
}

double PolicyModel::log_prob(int state_id, int action) const {
  const Vec lp = log_softmax(logits(state_id) / tau_);
  return lp[action];
}

double PolicyModel::sequence_log_prob(int prompt_id, std::span<const int> response) const {
  double lp = 0.0;
  for (const Step& st : space_->trajectory(prompt_id, response))
    lp += log_prob(st.state, st.action);
  return lp;
}

Mat PolicyModel::action_probs() const {
  Mat p = Mat::Zero(space_->size(), space_->vocab());
  for (int id = 0; id < space_->size(); ++id)
    if (!space_->terminal(id)) p.row(id) = probs(id).transpose();
  return p;
}

void PolicyModel::accumulate_logit_grad(int state_id, const Vec& dlogits, Vec& grad) const {
  const int row = row_of_state_[state_id];
  if (row < 0) throw Error("gradient requested at a terminal state");
  const int vocab = space_->vocab();
  if (kind_ == Kind::tabular) {
    grad.segment(static_cast<Eigen::Index>(row) * vocab, vocab) += dlogits;
    return;
  }
  const auto w1 = Eigen::Map<const Mat>(params_.data(), hidden_, feat_dim_);
  const auto b1 = params_.segment(static_cast<Eigen::Index>(hidden_) * feat_dim_, hidden_);
  const auto w2 = Eigen::Map<const Mat>(
      params_.data() + static_cast<Eigen::Index>(hidden_) * feat_dim_ + hidden_, vocab, hidden_);
  const Vec phi = features_.row(row).transpose();
  const Vec h = (w1 * phi + b1).array().tanh();
  const Vec dh = w2.transpose() * dlogits;
  const Vec dpre = dh.array() * (1.0 - h.array().square());

  auto gw1 = Eigen::Map<Mat>(grad.data(), hidden_, feat_dim_);
  auto gb1 = grad.segment(static_cast<Eigen::Index>(hidden_) * feat_dim_, hidden_);
  auto gw2 = Eigen::Map<Mat>(
      grad.data() + static_cast<Eigen::Index>(hidden_) * feat_dim_ + hidden_, vocab, hidden_);
  auto gb2 = grad.tail(vocab);
  gw1 += dpre * phi.transpose();
  gb1 += dpre;
  gw2 += dlogits * h.transpose();
  gb2 += dlogits;
}

void PolicyModel::set_logits(int state_id, const Vec& l) {
  if (kind_ != Kind::tabular) throw Error("set_logits is tabular-only");
  const int row = row_of_state_[state_id];
  if (row < 0) throw Error("set_logits at a terminal state");
  if (l.size() != space_->vocab()) throw Error("set_logits: wrong length");
  params_.segment(static_cast<Eigen::Index>(row) * space_->vocab(), space_->vocab()) = l;
}

PolicyModel policy_from_probs(const StateSpace& space, const Mat& probs, double tau) {
  PolicyModel p = PolicyModel::tabular(space, tau);
  for (int id = 0; id < space.size(); ++id) {
    if (space.terminal(id)) continue;
    Vec l(space.vocab());
    for (int a = 0; a < space.vocab(); ++a) {
      const double pr = probs(id, a);
      if (!(pr > 0.0)) throw ZeroProbability("policy_from_probs: non-positive probability");
      l[a] = tau * std::log(pr);
    }
    p.set_logits(id, l);
  }
  return p;
}

}  // namespace irlab
