#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace psys {

// Level index used for an attribute that was not reported.
inline constexpr int kNotReported = -1;

struct GroupAttribute {
  std::string name;
  std::vector<std::string> levels;

  bool operator==(const GroupAttribute&) const = default;
};

// A (possibly partial) group membership: one level index per attribute, or
// kNotReported. The all-kNotReported vector is the opt-out report.
class ReportingGroup {
 public:
  ReportingGroup() = default;
  explicit ReportingGroup(std::vector<int> entries) : entries_(std::move(entries)) {}

  static ReportingGroup none(std::size_t k) {
    return ReportingGroup(std::vector<int>(k, kNotReported));
  }

  std::size_t size() const { return entries_.size(); }
  int operator[](std::size_t i) const { return entries_[i]; }
  const std::vector<int>& entries() const { return entries_; }

  bool reported(std::size_t i) const { return entries_[i] != kNotReported; }
  std::size_t num_reported() const;
  std::vector<std::size_t> reported_attributes() const;
  bool is_full() const { return num_reported() == size(); }
  bool is_none() const { return num_reported() == 0; }

  ReportingGroup with(std::size_t attribute, int level) const;

  // True when every entry reported here is reported identically in `other`,
  // i.e. `other` is this report or a refinement of it.
  bool covers(const ReportingGroup& other) const;

  auto operator<=>(const ReportingGroup&) const = default;

 private:
  std::vector<int> entries_;
};

class GroupSchema {
 public:
  GroupSchema() = default;
  explicit GroupSchema(std::vector<GroupAttribute> attributes);

  std::size_t k() const { return attributes_.size(); }
  const std::vector<GroupAttribute>& attributes() const { return attributes_; }
  const GroupAttribute& attribute(std::size_t i) const { return attributes_.at(i); }
  std::size_t num_levels(std::size_t i) const { return attributes_.at(i).levels.size(); }

  std::optional<std::size_t> find_attribute(std::string_view name) const;
  std::optional<int> find_level(std::size_t attribute, std::string_view level) const;

  // |G_1| x ... x |G_k|.
  std::size_t num_full_groups() const;
  // Full groups in mixed-radix order (last attribute varies fastest).
  std::vector<ReportingGroup> full_groups() const;
  std::size_t full_group_index(const ReportingGroup& g) const;

  bool is_valid(const ReportingGroup& r) const;
  void check(const ReportingGroup& r) const;

  // "[female, old]" / "[female, ∅]".
  std::string describe(const ReportingGroup& r) const;
  std::uint64_t fingerprint() const;

  bool operator==(const GroupSchema&) const = default;

 private:
  std::vector<GroupAttribute> attributes_;
};

// Dense row-major matrix.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), values_(rows * cols, 0.0) {}
  FeatureMatrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::span<const double> row(std::size_t i) const { return {values_.data() + i * cols_, cols_}; }
  std::span<double> row(std::size_t i) { return {values_.data() + i * cols_, cols_}; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  const std::vector<double>& values() const { return values_; }

  bool operator==(const FeatureMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

class Dataset {
 public:
  Dataset() = default;
  // Validates shapes, binary labels and that every membership is fully
  // specified. Zero rows are allowed (restrictions may be empty).
  Dataset(GroupSchema schema, std::vector<std::string> feature_names, FeatureMatrix features,
          std::vector<int> labels, std::vector<ReportingGroup> groups);

  std::size_t n() const { return labels_.size(); }
  std::size_t d() const { return features_.cols(); }
  bool empty() const { return labels_.empty(); }

  const GroupSchema& schema() const { return schema_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }
  const FeatureMatrix& features() const { return features_; }
  const std::vector<int>& labels() const { return labels_; }
  const std::vector<ReportingGroup>& groups() const { return groups_; }

  std::size_t positives() const;
  std::size_t negatives() const { return n() - positives(); }

  Dataset subset(std::span<const std::size_t> rows) const;
  // Same rows, memberships replaced (used by imputation baselines).
  Dataset with_groups(std::vector<ReportingGroup> groups) const;
  std::uint64_t fingerprint() const;

 private:
  GroupSchema schema_;
  std::vector<std::string> feature_names_;
  FeatureMatrix features_;
  std::vector<int> labels_;
  std::vector<ReportingGroup> groups_;
};

struct SplitBundle {
  Dataset assign;
  Dataset prune;
  Dataset test;
  std::uint64_t seed = 0;
  bool shared_assign_prune = false;
};

// "users who report sex=male report age before hiv".
struct OrderingRule {
  std::string before;
  std::string after;
  std::optional<std::string> when_attribute;
  std::optional<std::string> when_level;
};

// Parsed schema configuration document.
struct SchemaConfig {
  int format_version = 1;
  std::string label_column;
  std::vector<std::string> feature_columns;
  GroupSchema schema;
  std::vector<std::string> group_columns;  // CSV column per attribute
  std::vector<OrderingRule> ordering;
  std::optional<std::size_t> min_samples;
};

inline constexpr int kSchemaFormatVersion = 1;

SchemaConfig parse_schema_config(std::string_view json_text);
SchemaConfig load_schema_config(const std::string& path);
std::string schema_config_to_json(const SchemaConfig& config);

Dataset load_dataset(std::istream& csv, const SchemaConfig& config);
Dataset load_dataset(const std::string& csv_path, const SchemaConfig& config);
void write_dataset_csv(std::ostream& out, const Dataset& d, const SchemaConfig& config);

struct SplitOptions {
  double test_fraction = 0.2;
  double prune_fraction = 0.2;
  std::uint64_t seed = 0;
  bool shared_assign_prune = false;
};

// Seeded split stratified on (full group, label) for strata with at least two
// members; singleton strata are pooled and spread at random.
SplitBundle split_dataset(const Dataset& d, const SplitOptions& options);

// Rows whose membership agrees with every entry reported in `r`.
Dataset restrict_to(const Dataset& d, const ReportingGroup& r);
std::vector<std::size_t> rows_matching(const Dataset& d, const ReportingGroup& r);

enum class Encoding { kNone, kOneHot, kIntersectional };

std::string_view encoding_name(Encoding e);
Encoding parse_encoding(std::string_view name);

std::size_t encoded_width(const GroupSchema& schema, std::size_t d, Encoding mode);
// Features followed by drop-first group indicators in schema order. Encodings
// other than kNone need every attribute reported.
void encode_row(const GroupSchema& schema, std::span<const double> features, const ReportingGroup& r,
                Encoding mode, std::span<double> out);
FeatureMatrix encode_features(const Dataset& d, Encoding mode);

struct GroupCount {
  ReportingGroup group;
  std::size_t n = 0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

std::vector<GroupCount> group_counts(const Dataset& d);

std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t seed = 1469598103934665603ULL);
std::uint64_t hash_combine(std::uint64_t h, std::uint64_t value);

}  // namespace psys
