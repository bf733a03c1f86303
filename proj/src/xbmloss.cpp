#include "duohash/xbmloss.hpp"

#include <stdexcept>
#include <string>

namespace duohash {

CrossBatchMemory::CrossBatchMemory(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("CrossBatchMemory: capacity must be positive");
}

void CrossBatchMemory::update(const Matrix& embeddings, std::span<const Label> labels) {
  if (static_cast<std::size_t>(embeddings.cols()) != labels.size()) {
    throw std::invalid_argument("CrossBatchMemory::update: " + std::to_string(embeddings.cols()) +
                                " embeddings but " + std::to_string(labels.size()) + " labels");
  }
  for (Eigen::Index i = 0; i < embeddings.cols(); ++i) {
    entries_.push_back(Entry{embeddings.col(i), labels[static_cast<std::size_t>(i)]});
  }
  while (entries_.size() > capacity_) entries_.pop_front();
}

LossResult contrastive_loss_xbm(const Matrix& batch, std::span<const Label> labels, const CrossBatchMemory& memory,
                                const Margins& margins) {
  const Eigen::Index n = batch.cols();
  if (n == 0) throw std::invalid_argument("contrastive_loss_xbm: empty batch");
  if (static_cast<std::size_t>(n) != labels.size()) {
    throw std::invalid_argument("contrastive_loss_xbm: batch/label count mismatch");
  }
  if (!(margins.negative > margins.positive) || margins.positive < 0.0) {
    throw std::invalid_argument("contrastive_loss_xbm: margins must satisfy m_n > m_p >= 0");
  }

  const auto mem_size = static_cast<std::ptrdiff_t>(memory.size());
  const std::ptrdiff_t first_self = mem_size - static_cast<std::ptrdiff_t>(n);

  LossResult result;
  result.grads = Matrix::Zero(batch.rows(), n);
  Vector pos_grad(batch.rows());
  Vector neg_grad(batch.rows());
  Vector diff(batch.rows());

  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto anchor = batch.col(i);
    const Label label = labels[static_cast<std::size_t>(i)];
    const std::ptrdiff_t self = first_self + i;

    double pos_sum = 0.0;
    double neg_sum = 0.0;
    std::size_t pos_count = 0;
    std::size_t neg_count = 0;
    pos_grad.setZero();
    neg_grad.setZero();

    for (std::ptrdiff_t j = 0; j < mem_size; ++j) {
      if (j == self) continue;
      const auto& entry = memory[static_cast<std::size_t>(j)];
      if (entry.embedding.size() != batch.rows()) {
        throw std::invalid_argument("contrastive_loss_xbm: memory embedding length differs from batch");
      }
      diff = anchor - entry.embedding;
      const double d = diff.norm();
      if (entry.label == label) {
        if (d > margins.positive) {
          pos_sum += d - margins.positive;
          pos_grad += diff / d;
          ++pos_count;
        }
      } else if (d < margins.negative) {
        neg_sum += margins.negative - d;
        if (d > 0.0) neg_grad -= diff / d;
        ++neg_count;
      }
    }

    if (pos_count > 0) {
      total += pos_sum / static_cast<double>(pos_count);
      result.grads.col(i) += pos_grad / static_cast<double>(pos_count);
    }
    if (neg_count > 0) {
      total += neg_sum / static_cast<double>(neg_count);
      result.grads.col(i) += neg_grad / static_cast<double>(neg_count);
    }
  }

  result.loss = total / static_cast<double>(n);
  result.grads /= static_cast<double>(n);
  return result;
}

}  // namespace duohash
