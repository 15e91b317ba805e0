#include <stdexcept>

#include "masd/maddpg.hpp"

namespace masd {

RowRing::RowRing(std::size_t width, std::size_t capacity) : width_(width), capacity_(capacity) {
  if (width == 0 || capacity == 0) throw std::invalid_argument("RowRing: zero width or capacity");
}

void RowRing::push(std::span<const double> row) {
  if (row.size() != width_) throw std::invalid_argument("RowRing::push: row width mismatch");
  if (count_ < capacity_) {
    data_.insert(data_.end(), row.begin(), row.end());
    ++count_;
    return;
  }
  std::copy(row.begin(), row.end(), data_.begin() + static_cast<std::ptrdiff_t>(head_ * width_));
  head_ = (head_ + 1) % capacity_;
}

std::span<const double> RowRing::oldest(std::size_t age) const {
  if (age >= count_) throw std::out_of_range("RowRing::oldest: age out of range");
  const std::size_t slot = count_ < capacity_ ? age : (head_ + age) % capacity_;
  return {data_.data() + slot * width_, width_};
}

RealMatrix RowRing::gather(std::span<const std::size_t> slots) const {
  RealMatrix out(static_cast<Eigen::Index>(slots.size()), static_cast<Eigen::Index>(width_));
  for (std::size_t r = 0; r < slots.size(); ++r) {
    if (slots[r] >= count_) throw std::out_of_range("RowRing::gather: slot out of range");
    std::copy_n(data_.data() + slots[r] * width_, width_, out.row(static_cast<Eigen::Index>(r)).data());
  }
  return out;
}

std::vector<std::size_t> RowRing::sample_slots(std::size_t n, Rng& rng) const {
  if (count_ == 0) throw std::logic_error("RowRing::sample_slots: empty buffer");
  std::vector<std::size_t> slots(n);
  for (auto& s : slots) s = rng.index(count_);
  return slots;
}

void RowRing::assign_raw(std::vector<double> data, std::size_t head) {
  if (data.size() % width_ != 0) throw std::invalid_argument("RowRing::assign_raw: ragged data");
  const std::size_t rows = data.size() / width_;
  if (rows > capacity_ || (rows < capacity_ && head != 0) || (rows == capacity_ && head >= capacity_)) {
    throw std::invalid_argument("RowRing::assign_raw: inconsistent size or head");
  }
  data_ = std::move(data);
  count_ = rows;
  head_ = head;
}

// Row layout: obs | actions | encoding | label | rewards | extrinsic | next_obs | done.
ReplayRl::ReplayRl(std::size_t num_agents, std::size_t obs_dim, std::size_t action_dim,
                   std::size_t enc_dim, std::size_t capacity)
    : n_(num_agents),
      obs_(obs_dim),
      act_(action_dim),
      enc_(enc_dim),
      ring_(2 * num_agents * obs_dim + num_agents * action_dim + enc_dim + 2 + 2 * num_agents,
            capacity) {}

void ReplayRl::push(const Transition& t) {
  if (static_cast<std::size_t>(t.obs.rows()) != n_ || static_cast<std::size_t>(t.obs.cols()) != obs_ ||
      static_cast<std::size_t>(t.actions.rows()) != n_ ||
      static_cast<std::size_t>(t.actions.cols()) != act_ || t.skill_encoding.size() != enc_ ||
      t.rewards.size() != n_ || t.extrinsic.size() != n_ || t.next_obs.rows() != t.obs.rows() ||
      t.next_obs.cols() != t.obs.cols()) {
    throw std::invalid_argument("ReplayRl::push: transition shape mismatch");
  }
  std::vector<double> row;
  row.reserve(ring_.width());
  row.insert(row.end(), t.obs.data(), t.obs.data() + t.obs.size());
  row.insert(row.end(), t.actions.data(), t.actions.data() + t.actions.size());
  row.insert(row.end(), t.skill_encoding.begin(), t.skill_encoding.end());
  row.push_back(static_cast<double>(t.skill_label));
  row.insert(row.end(), t.rewards.begin(), t.rewards.end());
  row.insert(row.end(), t.extrinsic.begin(), t.extrinsic.end());
  row.insert(row.end(), t.next_obs.data(), t.next_obs.data() + t.next_obs.size());
  row.push_back(t.done ? 1.0 : 0.0);
  ring_.push(row);
}

RlBatch ReplayRl::decode(const RealMatrix& rows) const {
  const auto n = static_cast<Eigen::Index>(n_);
  const auto no = static_cast<Eigen::Index>(n_ * obs_);
  const auto na = static_cast<Eigen::Index>(n_ * act_);
  const auto ne = static_cast<Eigen::Index>(enc_);
  RlBatch b;
  Eigen::Index c = 0;
  b.obs = rows.middleCols(c, no);
  c += no;
  b.actions = rows.middleCols(c, na);
  c += na;
  b.skill_encoding = rows.middleCols(c, ne);
  c += ne;
  b.labels.resize(static_cast<std::size_t>(rows.rows()));
  for (Eigen::Index r = 0; r < rows.rows(); ++r) b.labels[static_cast<std::size_t>(r)] = static_cast<int>(rows(r, c));
  c += 1;
  b.rewards = rows.middleCols(c, n);
  c += n;
  b.extrinsic = rows.middleCols(c, n);
  c += n;
  b.next_obs = rows.middleCols(c, no);
  c += no;
  b.done = rows.col(c);
  return b;
}

RlBatch ReplayRl::sample(std::size_t n, Rng& rng) const {
  const auto slots = ring_.sample_slots(n, rng);
  return decode(ring_.gather(slots));
}

Transition ReplayRl::at(std::size_t age) const {
  const auto row = ring_.oldest(age);
  RealMatrix m(1, static_cast<Eigen::Index>(row.size()));
  std::copy(row.begin(), row.end(), m.data());
  const RlBatch b = decode(m);
  const auto n = static_cast<Eigen::Index>(n_);
  Transition t;
  t.obs = Eigen::Map<const RealMatrix>(b.obs.data(), n, static_cast<Eigen::Index>(obs_));
  t.actions = Eigen::Map<const RealMatrix>(b.actions.data(), n, static_cast<Eigen::Index>(act_));
  t.skill_encoding.assign(b.skill_encoding.data(), b.skill_encoding.data() + enc_);
  t.skill_label = b.labels[0];
  t.rewards.assign(b.rewards.data(), b.rewards.data() + n_);
  t.extrinsic.assign(b.extrinsic.data(), b.extrinsic.data() + n_);
  t.next_obs = Eigen::Map<const RealMatrix>(b.next_obs.data(), n, static_cast<Eigen::Index>(obs_));
  t.done = b.done(0) != 0.0;
  return t;
}

// Row layout: joint features | encoding | label.
ReplayDisc::ReplayDisc(std::size_t joint_feature_dim, std::size_t enc_dim, std::size_t capacity)
    : feat_(joint_feature_dim), enc_(enc_dim), ring_(joint_feature_dim + enc_dim + 1, capacity) {}

void ReplayDisc::push(std::span<const double> joint_features, std::span<const double> skill_encoding,
                      int label) {
  if (joint_features.size() != feat_ || skill_encoding.size() != enc_) {
    throw std::invalid_argument("ReplayDisc::push: shape mismatch");
  }
  std::vector<double> row(joint_features.begin(), joint_features.end());
  row.insert(row.end(), skill_encoding.begin(), skill_encoding.end());
  row.push_back(static_cast<double>(label));
  ring_.push(row);
}

DiscBatch ReplayDisc::sample(std::size_t n, const SkillSpace& space, Rng& rng) const {
  const RealMatrix rows = ring_.gather(ring_.sample_slots(n, rng));
  DiscBatch b;
  b.features = rows.leftCols(static_cast<Eigen::Index>(feat_));
  if (space.kind == SkillKind::kDiscrete) {
    b.targets.labels.resize(n);
    const auto lc = static_cast<Eigen::Index>(feat_ + enc_);
    for (std::size_t r = 0; r < n; ++r) b.targets.labels[r] = static_cast<int>(rows(static_cast<Eigen::Index>(r), lc));
  } else {
    b.targets.values = rows.middleCols(static_cast<Eigen::Index>(feat_), static_cast<Eigen::Index>(enc_));
  }
  return b;
}

}  // namespace masd
