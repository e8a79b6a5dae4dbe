#include "psys/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "psys/error.hpp"

namespace psys {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::kInvalidConfig: return "InvalidConfig";
    case Errc::kMissingColumn: return "MissingColumn";
    case Errc::kUnknownLevel: return "UnknownLevel";
    case Errc::kNonNumericFeature: return "NonNumericFeature";
    case Errc::kMissingValue: return "MissingValue";
    case Errc::kInvalidLabel: return "InvalidLabel";
    case Errc::kEmptySplit: return "EmptySplit";
    case Errc::kInsufficientData: return "InsufficientData";
    case Errc::kShapeMismatch: return "ShapeMismatch";
    case Errc::kUndefinedMetric: return "UndefinedMetric";
    case Errc::kPartialInput: return "PartialInput";
    case Errc::kNonTruthfulReport: return "NonTruthfulReport";
    case Errc::kTooManyAttributes: return "TooManyAttributes";
    case Errc::kInvalidArtifact: return "InvalidArtifact";
    case Errc::kInvalidArgument: return "InvalidArgument";
  }
  return "Error";
}

std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t hash_combine(std::uint64_t h, std::uint64_t value) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(value >> (8 * i));
  return fnv1a(buf, h);
}

namespace {

std::uint64_t hash_string(std::uint64_t h, std::string_view s) {
  h = hash_combine(h, s.size());
  return fnv1a({reinterpret_cast<const unsigned char*>(s.data()), s.size()}, h);
}

std::uint64_t hash_double(std::uint64_t h, double v) {
  std::uint64_t bits;
  static_assert(sizeof(bits) == sizeof(v));
  std::memcpy(&bits, &v, sizeof(v));
  return hash_combine(h, bits);
}

}  // namespace

// ---------------------------------------------------------------------------
// ReportingGroup

std::size_t ReportingGroup::num_reported() const {
  return static_cast<std::size_t>(std::count_if(entries_.begin(), entries_.end(),
                                                [](int e) { return e != kNotReported; }));
}

std::vector<std::size_t> ReportingGroup::reported_attributes() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (reported(i)) out.push_back(i);
  return out;
}

ReportingGroup ReportingGroup::with(std::size_t attribute, int level) const {
  auto entries = entries_;
  entries.at(attribute) = level;
  return ReportingGroup(std::move(entries));
}

bool ReportingGroup::covers(const ReportingGroup& other) const {
  if (other.size() != size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i] != kNotReported && entries_[i] != other.entries_[i]) return false;
  return true;
}

// ---------------------------------------------------------------------------
// GroupSchema

GroupSchema::GroupSchema(std::vector<GroupAttribute> attributes) : attributes_(std::move(attributes)) {
  if (attributes_.empty()) throw Error(Errc::kInvalidConfig, "schema needs at least one group attribute");
  std::set<std::string> names;
  for (const auto& a : attributes_) {
    if (a.name.empty()) throw Error(Errc::kInvalidConfig, "group attribute with empty name");
    if (!names.insert(a.name).second) throw Error(Errc::kInvalidConfig, "duplicate attribute '" + a.name + "'");
    if (a.levels.size() < 2)
      throw Error(Errc::kInvalidConfig, "attribute '" + a.name + "' needs at least two levels");
    std::set<std::string> levels(a.levels.begin(), a.levels.end());
    if (levels.size() != a.levels.size())
      throw Error(Errc::kInvalidConfig, "duplicate level in attribute '" + a.name + "'");
  }
}

std::optional<std::size_t> GroupSchema::find_attribute(std::string_view name) const {
  for (std::size_t i = 0; i < attributes_.size(); ++i)
    if (attributes_[i].name == name) return i;
  return std::nullopt;
}

std::optional<int> GroupSchema::find_level(std::size_t attribute, std::string_view level) const {
  const auto& levels = attributes_.at(attribute).levels;
  for (std::size_t j = 0; j < levels.size(); ++j)
    if (levels[j] == level) return static_cast<int>(j);
  return std::nullopt;
}

std::size_t GroupSchema::num_full_groups() const {
  std::size_t total = 1;
  for (const auto& a : attributes_) total *= a.levels.size();
  return total;
}

std::vector<ReportingGroup> GroupSchema::full_groups() const {
  std::vector<ReportingGroup> out;
  out.reserve(num_full_groups());
  std::vector<int> current(k(), 0);
  for (std::size_t idx = 0; idx < num_full_groups(); ++idx) {
    out.emplace_back(current);
    for (std::size_t i = k(); i-- > 0;) {
      if (++current[i] < static_cast<int>(attributes_[i].levels.size())) break;
      current[i] = 0;
    }
  }
  return out;
}

std::size_t GroupSchema::full_group_index(const ReportingGroup& g) const {
  if (!g.is_full()) throw Error(Errc::kPartialInput, "full group index of a partial report");
  std::size_t idx = 0;
  for (std::size_t i = 0; i < k(); ++i) idx = idx * attributes_[i].levels.size() + static_cast<std::size_t>(g[i]);
  return idx;
}

bool GroupSchema::is_valid(const ReportingGroup& r) const {
  if (r.size() != k()) return false;
  for (std::size_t i = 0; i < k(); ++i)
    if (r[i] != kNotReported && (r[i] < 0 || r[i] >= static_cast<int>(attributes_[i].levels.size()))) return false;
  return true;
}

void GroupSchema::check(const ReportingGroup& r) const {
  if (!is_valid(r)) throw Error(Errc::kInvalidArgument, "report does not match schema");
}

std::string GroupSchema::describe(const ReportingGroup& r) const {
  std::string out = "[";
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (i) out += ", ";
    out += r.reported(i) ? attributes_.at(i).levels.at(static_cast<std::size_t>(r[i])) : std::string("\xE2\x88\x85");
  }
  return out + "]";
}

std::uint64_t GroupSchema::fingerprint() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& a : attributes_) {
    h = hash_string(h, a.name);
    for (const auto& l : a.levels) h = hash_string(h, l);
  }
  return h;
}

// ---------------------------------------------------------------------------
// FeatureMatrix / Dataset

FeatureMatrix::FeatureMatrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows * cols) throw Error(Errc::kShapeMismatch, "matrix values do not match shape");
}

Dataset::Dataset(GroupSchema schema, std::vector<std::string> feature_names, FeatureMatrix features,
                 std::vector<int> labels, std::vector<ReportingGroup> groups)
    : schema_(std::move(schema)),
      feature_names_(std::move(feature_names)),
      features_(std::move(features)),
      labels_(std::move(labels)),
      groups_(std::move(groups)) {
  if (features_.cols() == 0) throw Error(Errc::kShapeMismatch, "dataset needs at least one feature");
  if (feature_names_.size() != features_.cols())
    throw Error(Errc::kShapeMismatch, "feature names do not match feature columns");
  if (features_.rows() != labels_.size() || groups_.size() != labels_.size())
    throw Error(Errc::kShapeMismatch, "row counts disagree across features, labels and groups");
  for (int y : labels_)
    if (y != 0 && y != 1) throw Error(Errc::kInvalidLabel, "labels must be 0 or 1");
  for (const auto& g : groups_)
    if (!schema_.is_valid(g) || !g.is_full())
      throw Error(Errc::kPartialInput, "dataset memberships must be fully specified");
}

std::size_t Dataset::positives() const {
  return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), 1));
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  std::vector<double> values;
  values.reserve(rows.size() * d());
  std::vector<int> labels;
  labels.reserve(rows.size());
  std::vector<ReportingGroup> groups;
  groups.reserve(rows.size());
  for (std::size_t r : rows) {
    auto src = features_.row(r);
    values.insert(values.end(), src.begin(), src.end());
    labels.push_back(labels_.at(r));
    groups.push_back(groups_.at(r));
  }
  return Dataset(schema_, feature_names_, FeatureMatrix(rows.size(), d(), std::move(values)), std::move(labels),
                 std::move(groups));
}

Dataset Dataset::with_groups(std::vector<ReportingGroup> groups) const {
  return Dataset(schema_, feature_names_, features_, labels_, std::move(groups));
}

std::uint64_t Dataset::fingerprint() const {
  std::uint64_t h = schema_.fingerprint();
  for (const auto& name : feature_names_) h = hash_string(h, name);
  h = hash_combine(h, n());
  for (double v : features_.values()) h = hash_double(h, v);
  for (int y : labels_) h = hash_combine(h, static_cast<std::uint64_t>(y));
  for (const auto& g : groups_)
    for (int e : g.entries()) h = hash_combine(h, static_cast<std::uint64_t>(e));
  return h;
}

// ---------------------------------------------------------------------------
// Schema configuration

SchemaConfig parse_schema_config(std::string_view json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kInvalidConfig, std::string("schema config is not valid JSON: ") + e.what());
  }
  try {
    SchemaConfig config;
    config.format_version = doc.value("format_version", 0);
    if (config.format_version != kSchemaFormatVersion)
      throw Error(Errc::kInvalidConfig, "unsupported schema format_version " + std::to_string(config.format_version));
    config.label_column = doc.at("label").get<std::string>();
    config.feature_columns = doc.at("features").get<std::vector<std::string>>();
    if (config.feature_columns.empty()) throw Error(Errc::kInvalidConfig, "schema lists no feature columns");
    std::vector<GroupAttribute> attributes;
    for (const auto& g : doc.at("groups")) {
      GroupAttribute a{g.at("name").get<std::string>(), g.at("levels").get<std::vector<std::string>>()};
      config.group_columns.push_back(g.value("column", a.name));
      attributes.push_back(std::move(a));
    }
    config.schema = GroupSchema(std::move(attributes));
    if (doc.contains("ordering")) {
      for (const auto& o : doc.at("ordering")) {
        OrderingRule rule{o.at("before").get<std::string>(), o.at("after").get<std::string>(), {}, {}};
        if (o.contains("when")) {
          rule.when_attribute = o.at("when").at("attribute").get<std::string>();
          rule.when_level = o.at("when").at("level").get<std::string>();
        }
        config.ordering.push_back(std::move(rule));
      }
    }
    if (doc.contains("min_samples")) config.min_samples = doc.at("min_samples").get<std::size_t>();
    return config;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kInvalidConfig, std::string("malformed schema config: ") + e.what());
  }
}

SchemaConfig load_schema_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kInvalidConfig, "cannot open schema config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_schema_config(buf.str());
}

std::string schema_config_to_json(const SchemaConfig& config) {
  nlohmann::ordered_json doc;
  doc["format_version"] = config.format_version;
  doc["label"] = config.label_column;
  doc["features"] = config.feature_columns;
  doc["groups"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < config.schema.k(); ++i) {
    const auto& a = config.schema.attribute(i);
    nlohmann::ordered_json g;
    g["name"] = a.name;
    g["levels"] = a.levels;
    if (i < config.group_columns.size() && config.group_columns[i] != a.name) g["column"] = config.group_columns[i];
    doc["groups"].push_back(g);
  }
  if (!config.ordering.empty()) {
    doc["ordering"] = nlohmann::ordered_json::array();
    for (const auto& rule : config.ordering) {
      nlohmann::ordered_json o;
      o["before"] = rule.before;
      o["after"] = rule.after;
      if (rule.when_attribute) o["when"] = {{"attribute", *rule.when_attribute}, {"level", *rule.when_level}};
      doc["ordering"].push_back(o);
    }
  }
  if (config.min_samples) doc["min_samples"] = *config.min_samples;
  return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  fields.push_back(std::move(field));
  for (auto& f : fields) {
    auto first = f.find_first_not_of(" \t");
    auto last = f.find_last_not_of(" \t\r");
    f = first == std::string::npos ? std::string() : f.substr(first, last - first + 1);
  }
  return fields;
}

std::size_t column_index(const std::vector<std::string>& header, const std::string& name) {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw Error(Errc::kMissingColumn, "column '" + name + "' not in CSV header");
  return static_cast<std::size_t>(it - header.begin());
}

std::string where(std::size_t row, const std::string& column) {
  return "row " + std::to_string(row) + ", column '" + column + "'";
}

}  // namespace

Dataset load_dataset(std::istream& csv, const SchemaConfig& config) {
  std::string line;
  if (!std::getline(csv, line)) throw Error(Errc::kMissingColumn, "CSV has no header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_csv_line(line);

  const std::size_t label_col = column_index(header, config.label_column);
  std::vector<std::size_t> feature_cols;
  for (const auto& f : config.feature_columns) feature_cols.push_back(column_index(header, f));
  std::vector<std::size_t> group_cols;
  for (std::size_t i = 0; i < config.schema.k(); ++i) {
    const auto& name = i < config.group_columns.size() ? config.group_columns[i] : config.schema.attribute(i).name;
    group_cols.push_back(column_index(header, name));
  }

  std::vector<double> values;
  std::vector<int> labels;
  std::vector<ReportingGroup> groups;
  std::size_t row = 0;
  while (std::getline(csv, line)) {
    if (line.empty() || line == "\r") continue;
    ++row;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw Error(Errc::kMissingValue, "row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                                           " fields, header has " + std::to_string(header.size()));
    const auto& label = fields[label_col];
    if (label.empty()) throw Error(Errc::kMissingValue, where(row, config.label_column));
    if (label == "0" || label == "0.0") {
      labels.push_back(0);
    } else if (label == "1" || label == "1.0") {
      labels.push_back(1);
    } else {
      throw Error(Errc::kInvalidLabel, where(row, config.label_column) + " has label '" + label + "'");
    }
    for (std::size_t j = 0; j < feature_cols.size(); ++j) {
      const auto& cell = fields[feature_cols[j]];
      const auto& name = config.feature_columns[j];
      if (cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan")
        throw Error(Errc::kMissingValue, where(row, name));
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v))
        throw Error(Errc::kNonNumericFeature, where(row, name) + " value '" + cell + "'");
      values.push_back(v);
    }
    std::vector<int> g(config.schema.k());
    for (std::size_t i = 0; i < config.schema.k(); ++i) {
      const auto& cell = fields[group_cols[i]];
      const auto& name = config.schema.attribute(i).name;
      if (cell.empty()) throw Error(Errc::kMissingValue, where(row, name));
      auto level = config.schema.find_level(i, cell);
      if (!level) throw Error(Errc::kUnknownLevel, where(row, name) + " level '" + cell + "'");
      g[i] = *level;
    }
    groups.emplace_back(std::move(g));
  }
  if (labels.empty()) throw Error(Errc::kMissingValue, "CSV has no data rows");
  const std::size_t n = labels.size();
  return Dataset(config.schema, config.feature_columns, FeatureMatrix(n, feature_cols.size(), std::move(values)),
                 std::move(labels), std::move(groups));
}

Dataset load_dataset(const std::string& csv_path, const SchemaConfig& config) {
  std::ifstream in(csv_path);
  if (!in) throw Error(Errc::kMissingColumn, "cannot open data file '" + csv_path + "'");
  return load_dataset(in, config);
}

void write_dataset_csv(std::ostream& out, const Dataset& d, const SchemaConfig& config) {
  const auto& schema = d.schema();
  for (std::size_t j = 0; j < d.d(); ++j) out << config.feature_columns.at(j) << ',';
  for (std::size_t i = 0; i < schema.k(); ++i) {
    out << (i < config.group_columns.size() ? config.group_columns[i] : schema.attribute(i).name) << ',';
  }
  out << config.label_column << '\n';
  std::ostringstream cell;
  cell.precision(17);
  for (std::size_t r = 0; r < d.n(); ++r) {
    for (double v : d.features().row(r)) {
      cell.str("");
      cell << v;
      out << cell.str() << ',';
    }
    for (std::size_t i = 0; i < schema.k(); ++i)
      out << schema.attribute(i).levels[static_cast<std::size_t>(d.groups()[r][i])] << ',';
    out << d.labels()[r] << '\n';
  }
}

// ---------------------------------------------------------------------------
// Splitting

SplitBundle split_dataset(const Dataset& d, const SplitOptions& options) {
  const double test = options.test_fraction;
  const double prune = options.prune_fraction;
  if (!(test > 0.0 && test < 1.0) || !(prune > 0.0 && prune < 1.0) || test + prune >= 1.0)
    throw Error(Errc::kInvalidArgument, "split fractions must lie in (0,1) and sum to less than 1");

  const std::size_t n = d.n();
  const auto n_test = static_cast<std::size_t>(std::llround(test * static_cast<double>(n)));
  const auto n_prune = static_cast<std::size_t>(std::llround(prune * static_cast<double>(n)));
  if (n_test == 0 || n_prune == 0 || n_test + n_prune >= n)
    throw Error(Errc::kEmptySplit, "split of " + std::to_string(n) + " rows leaves an empty part");

  // Strata keyed by (full group, label); members shuffled, then every row gets
  // the fractional position (j + 0.5) / m within its stratum. Sorting by that
  // position interleaves strata so each prefix is close to proportional.
  std::map<std::size_t, std::vector<std::size_t>> strata;
  for (std::size_t r = 0; r < n; ++r)
    strata[d.schema().full_group_index(d.groups()[r]) * 2 + static_cast<std::size_t>(d.labels()[r])].push_back(r);
  std::vector<std::size_t> pooled;
  std::vector<std::vector<std::size_t>> groups;
  for (auto& [key, rows] : strata) {
    if (rows.size() >= 2) {
      groups.push_back(std::move(rows));
    } else {
      pooled.insert(pooled.end(), rows.begin(), rows.end());
    }
  }
  if (!pooled.empty()) groups.push_back(std::move(pooled));

  std::mt19937_64 rng(options.seed);
  struct Ranked {
    double position;
    std::uint64_t tie;
    std::size_t row;
  };
  std::vector<Ranked> ranked;
  ranked.reserve(n);
  for (auto& rows : groups) {
    std::shuffle(rows.begin(), rows.end(), rng);
    const double m = static_cast<double>(rows.size());
    for (std::size_t j = 0; j < rows.size(); ++j)
      ranked.push_back({(static_cast<double>(j) + 0.5) / m, rng(), rows[j]});
  }
  std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    if (a.position != b.position) return a.position < b.position;
    return a.tie < b.tie;
  });

  std::vector<std::size_t> test_rows, prune_rows, assign_rows;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (i < n_test) {
      test_rows.push_back(ranked[i].row);
    } else if (i < n_test + n_prune) {
      prune_rows.push_back(ranked[i].row);
    } else {
      assign_rows.push_back(ranked[i].row);
    }
  }
  for (auto* part : {&test_rows, &prune_rows, &assign_rows}) std::sort(part->begin(), part->end());

  SplitBundle bundle;
  bundle.seed = options.seed;
  bundle.test = d.subset(test_rows);
  bundle.shared_assign_prune = options.shared_assign_prune;
  if (options.shared_assign_prune) {
    std::vector<std::size_t> train_rows = assign_rows;
    train_rows.insert(train_rows.end(), prune_rows.begin(), prune_rows.end());
    std::sort(train_rows.begin(), train_rows.end());
    bundle.assign = d.subset(train_rows);
    bundle.prune = bundle.assign;
  } else {
    bundle.assign = d.subset(assign_rows);
    bundle.prune = d.subset(prune_rows);
  }
  return bundle;
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> rows_matching(const Dataset& d, const ReportingGroup& r) {
  d.schema().check(r);
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < d.n(); ++i)
    if (r.covers(d.groups()[i])) rows.push_back(i);
  return rows;
}

Dataset restrict_to(const Dataset& d, const ReportingGroup& r) {
  if (r.is_none()) {
    d.schema().check(r);
    return d;
  }
  const auto rows = rows_matching(d, r);
  return d.subset(rows);
}

std::string_view encoding_name(Encoding e) {
  switch (e) {
    case Encoding::kNone: return "none";
    case Encoding::kOneHot: return "onehot";
    case Encoding::kIntersectional: return "intersectional";
  }
  return "none";
}

Encoding parse_encoding(std::string_view name) {
  if (name == "none") return Encoding::kNone;
  if (name == "onehot") return Encoding::kOneHot;
  if (name == "intersectional") return Encoding::kIntersectional;
  throw Error(Errc::kInvalidArgument, "unknown encoding '" + std::string(name) + "'");
}

std::size_t encoded_width(const GroupSchema& schema, std::size_t d, Encoding mode) {
  switch (mode) {
    case Encoding::kNone: return d;
    case Encoding::kOneHot: {
      std::size_t w = d;
      for (const auto& a : schema.attributes()) w += a.levels.size() - 1;
      return w;
    }
    case Encoding::kIntersectional: return d + schema.num_full_groups() - 1;
  }
  return d;
}

void encode_row(const GroupSchema& schema, std::span<const double> features, const ReportingGroup& r, Encoding mode,
                std::span<double> out) {
  if (out.size() != encoded_width(schema, features.size(), mode))
    throw Error(Errc::kShapeMismatch, "encoded row has the wrong width");
  std::copy(features.begin(), features.end(), out.begin());
  if (mode == Encoding::kNone) return;
  if (!r.is_full()) throw Error(Errc::kPartialInput, "group encoding needs every attribute reported");
  std::fill(out.begin() + static_cast<std::ptrdiff_t>(features.size()), out.end(), 0.0);
  std::size_t offset = features.size();
  if (mode == Encoding::kOneHot) {
    for (std::size_t i = 0; i < schema.k(); ++i) {
      if (r[i] > 0) out[offset + static_cast<std::size_t>(r[i]) - 1] = 1.0;
      offset += schema.num_levels(i) - 1;
    }
  } else {
    const std::size_t idx = schema.full_group_index(r);
    if (idx > 0) out[offset + idx - 1] = 1.0;
  }
}

FeatureMatrix encode_features(const Dataset& d, Encoding mode) {
  if (mode == Encoding::kNone) return d.features();
  FeatureMatrix out(d.n(), encoded_width(d.schema(), d.d(), mode));
  for (std::size_t r = 0; r < d.n(); ++r) encode_row(d.schema(), d.features().row(r), d.groups()[r], mode, out.row(r));
  return out;
}

std::vector<GroupCount> group_counts(const Dataset& d) {
  std::vector<GroupCount> counts;
  for (auto& g : d.schema().full_groups()) counts.push_back({std::move(g), 0, 0, 0});
  for (std::size_t r = 0; r < d.n(); ++r) {
    auto& c = counts[d.schema().full_group_index(d.groups()[r])];
    ++c.n;
    if (d.labels()[r] == 1) {
      ++c.positives;
    } else {
      ++c.negatives;
    }
  }
  return counts;
}

}  // namespace psys
