#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "cbmshift/common.hpp"
#include "cbmshift/data_model.hpp"

namespace cbmshift {

/// Per-class concept activation statistics from in-domain validation data:
/// mean and population standard deviation of every concept's activation.
struct ConceptMemory {
  int num_classes = 0;
  int num_concepts = 0;
  Matrix means;               // K x L
  Matrix stds;                // K x L, population convention
  std::vector<long> counts;   // validation samples per class
};

/// Which splits feed the memory; the validation split alone is the default.
struct MemorySplits {
  bool use_train = false;
  bool use_val = true;
};

/// Aggregates activation records into the memory. Every class must be
/// covered by at least one selected record.
ConceptMemory build_memory(std::span<const ActivationRecord> records, int num_classes,
                           int num_concepts, const MemorySplits& splits = {});

void save_memory(const ConceptMemory& memory, const std::filesystem::path& path);
ConceptMemory load_memory(const std::filesystem::path& path);

}  // namespace cbmshift
