#pragma once

#include <cstddef>
#include <deque>
#include <span>
#include <vector>

#include "duohash/hashcore.hpp"
#include "duohash/label.hpp"

namespace duohash {

/// FIFO store of the most recent embeddings and their labels.
class CrossBatchMemory {
 public:
  struct Entry {
    Vector embedding;
    Label label;
  };

  explicit CrossBatchMemory(std::size_t capacity);

  /// Appends the batch (columns of `embeddings`) and evicts the oldest
  /// entries until at most capacity() remain.
  void update(const Matrix& embeddings, std::span<const Label> labels);

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }  // 0 = oldest
  const std::deque<Entry>& entries() const { return entries_; }

 private:
  std::size_t capacity_;
  std::deque<Entry> entries_;
};

struct Margins {
  double positive = 0.0;  // m_p
  double negative = 1.0;  // m_n
};

struct LossResult {
  double loss = 0.0;
  Matrix grads;  // one column per batch embedding
};

/// Contrastive loss over the cross-batch memory. The memory must already hold
/// the batch as its newest entries; batch element i is matched with memory
/// slot size() - n + i so it never pairs with itself. Memory entries are
/// constants for the gradient.
LossResult contrastive_loss_xbm(const Matrix& batch, std::span<const Label> labels, const CrossBatchMemory& memory,
                                const Margins& margins = {});

}  // namespace duohash
