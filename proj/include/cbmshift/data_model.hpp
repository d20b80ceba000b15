#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cbmshift/common.hpp"

namespace cbmshift {

enum class Split { train, val, test };

const char* to_string(Split split);
std::optional<Split> split_from_string(std::string_view text);

/// Ordered list of distinct concept names. The index of a name is stable for
/// the lifetime of a run and is the concept index used everywhere else.
class ConceptVocabulary {
 public:
  ConceptVocabulary() = default;
  explicit ConceptVocabulary(std::vector<std::string> names);

  int size() const { return static_cast<int>(names_.size()); }
  const std::string& name(int index) const { return names_[static_cast<size_t>(index)]; }
  const std::vector<std::string>& names() const { return names_; }
  /// Returns -1 when the name is unknown.
  int index_of(std::string_view name) const;

 private:
  std::vector<std::string> names_;
};

/// Ordered list of distinct class names; at least two.
class ClassVocabulary {
 public:
  ClassVocabulary() = default;
  explicit ClassVocabulary(std::vector<std::string> names);

  int size() const { return static_cast<int>(names_.size()); }
  const std::string& name(int index) const { return names_[static_cast<size_t>(index)]; }
  const std::vector<std::string>& names() const { return names_; }
  int index_of(std::string_view name) const;

 private:
  std::vector<std::string> names_;
};

ConceptVocabulary load_concept_vocabulary(const std::filesystem::path& path);
ClassVocabulary load_class_vocabulary(const std::filesystem::path& path);
void write_vocabulary(std::span<const std::string> names, const std::filesystem::path& path);

/// One example: feature vector and/or binary concept labels, plus class label.
struct Sample {
  std::string sample_id;
  std::optional<std::vector<double>> features;
  std::optional<std::vector<double>> concept_labels;
  int class_label = -1;
};

/// Concept activations (sigmoid outputs) for one sample, always in [0,1].
struct ActivationRecord {
  std::string sample_id;
  std::vector<double> activations;
  int class_label = -1;
  Split split = Split::train;
};

struct SplitDataset {
  ConceptVocabulary concepts;
  ClassVocabulary classes;
  std::vector<Sample> train;
  std::vector<Sample> val;
  std::vector<Sample> test;

  const std::vector<Sample>& split(Split s) const;
  std::vector<Sample>& split(Split s);

  /// Checks that every class has at least one sample in each non-empty split.
  /// Called by consumers that require full coverage (training, memory
  /// building); plain loading tolerates gaps so that small OOD files with
  /// missing classes remain loadable.
  void require_class_coverage() const;
};

/// Parses the samples CSV format:
///   sample_id,split,class,x_0..x_{d-1},c_0..c_{L-1}
/// The feature block and the concept block are each optional, but at least
/// one must be present. Errors cite the 1-based file line.
SplitDataset load_samples_csv(const std::filesystem::path& path,
                              const ConceptVocabulary& concepts,
                              const ClassVocabulary& classes);

void write_samples_csv(const SplitDataset& dataset, const std::filesystem::path& path);

/// Parses the activations CSV format:
///   sample_id,split,class,a_0..a_{L-1}
/// Values outside [0,1] beyond 1e-9 tolerance are rejected with the row and
/// concept name; values within tolerance are snapped into [0,1].
std::vector<ActivationRecord> load_activations_csv(const std::filesystem::path& path,
                                                   const ConceptVocabulary& concepts,
                                                   const ClassVocabulary& classes);

/// Writes records with 9 fractional digits per cell so that a load/write
/// round trip is exact at printed precision. All records must share one L.
void write_activations_csv(std::span<const ActivationRecord> records,
                           const std::filesystem::path& path,
                           const ConceptVocabulary& concepts,
                           const ClassVocabulary& classes);

}  // namespace cbmshift
