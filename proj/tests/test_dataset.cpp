#include <doctest.h>

#include <set>
#include <sstream>

#include "psys/dataset.hpp"
#include "psys/error.hpp"
#include "support.hpp"

using namespace psys;

namespace {

const char* kSchema = R"({
  "format_version": 1,
  "label": "y",
  "features": ["x1", "x2"],
  "groups": [
    {"name": "sex", "levels": ["female", "male"]},
    {"name": "age", "levels": ["old", "young"], "column": "age_band"}
  ],
  "ordering": [{"before": "age", "after": "sex"}],
  "min_samples": 4
})";

GroupSchema two_by_three() { return GroupSchema({{"a", {"a0", "a1"}}, {"b", {"b0", "b1", "b2"}}}); }

Errc load_error(const std::string& csv) {
  const auto config = parse_schema_config(kSchema);
  std::istringstream in(csv);
  try {
    load_dataset(in, config);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::kInvalidArgument;
}

}  // namespace

TEST_SUITE("dataset") {
  TEST_CASE("reporting groups compare by coverage") {
    const ReportingGroup none = ReportingGroup::none(2);
    const ReportingGroup female = none.with(0, 0);
    const ReportingGroup female_old = female.with(1, 0);
    CHECK(none.covers(female_old));
    CHECK(female.covers(female_old));
    CHECK_FALSE(female_old.covers(female));
    CHECK_FALSE(none.with(0, 1).covers(female_old));
    CHECK(female_old.is_full());
    CHECK(none.is_none());
    CHECK(female.num_reported() == 1);
    CHECK(female.reported_attributes() == std::vector<std::size_t>{0});
  }

  TEST_CASE("full groups enumerate in mixed-radix order") {
    const auto schema = two_by_three();
    const auto groups = schema.full_groups();
    REQUIRE(groups.size() == 6);
    CHECK(schema.num_full_groups() == 6);
    CHECK(groups[0] == ReportingGroup({0, 0}));
    CHECK(groups[1] == ReportingGroup({0, 1}));
    CHECK(groups[3] == ReportingGroup({1, 0}));
    for (std::size_t i = 0; i < groups.size(); ++i) CHECK(schema.full_group_index(groups[i]) == i);
    CHECK(schema.describe(ReportingGroup({1, kNotReported})) == "[a1, ∅]");
  }

  TEST_CASE("schema rejects malformed reports") {
    const auto schema = two_by_three();
    CHECK_FALSE(schema.is_valid(ReportingGroup({0})));
    CHECK_FALSE(schema.is_valid(ReportingGroup({0, 3})));
    CHECK_THROWS_AS(schema.check(ReportingGroup({2, 0})), Error);
    CHECK_THROWS_AS(GroupSchema(std::vector<GroupAttribute>{{"a", {"x"}}}), Error);
  }

  TEST_CASE("schema fingerprint changes with levels") {
    const auto a = two_by_three();
    const GroupSchema b({{"a", {"a0", "a1"}}, {"b", {"b0", "b2", "b1"}}});
    CHECK(a.fingerprint() == two_by_three().fingerprint());
    CHECK(a.fingerprint() != b.fingerprint());
  }

  TEST_CASE("schema config parses columns, ordering and sample floor") {
    const auto c = parse_schema_config(kSchema);
    CHECK(c.label_column == "y");
    CHECK(c.group_columns == std::vector<std::string>{"sex", "age_band"});
    REQUIRE(c.ordering.size() == 1);
    CHECK(c.ordering[0].before == "age");
    CHECK(c.min_samples == 4u);
    const auto again = parse_schema_config(schema_config_to_json(c));
    CHECK(again.schema == c.schema);
    CHECK(again.group_columns == c.group_columns);
  }

  TEST_CASE("schema config errors are configuration errors") {
    CHECK_THROWS_AS(parse_schema_config("{"), Error);
    try {
      parse_schema_config(R"({"format_version": 9, "label": "y", "features": ["x"], "groups": []})");
      FAIL("accepted a future format");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::kInvalidConfig);
    }
    try {
      load_schema_config("/nonexistent/schema.json");
      FAIL("opened a missing file");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::kInvalidConfig);
    }
  }

  TEST_CASE("csv loads features, labels and memberships") {
    const auto config = parse_schema_config(kSchema);
    std::istringstream in("y,x1,x2,sex,age_band\n1,0.5,2,female,young\n0,-1,3.25,male,old\n");
    const Dataset d = load_dataset(in, config);
    REQUIRE(d.n() == 2);
    CHECK(d.d() == 2);
    CHECK(d.labels() == std::vector<int>{1, 0});
    CHECK(d.features()(1, 1) == 3.25);
    CHECK(d.groups()[0] == ReportingGroup({0, 1}));
    CHECK(d.positives() == 1);
  }

  TEST_CASE("csv errors carry specific codes") {
    CHECK(load_error("y,x1,sex,age_band\n1,0,female,old\n") == Errc::kMissingColumn);
    CHECK(load_error("y,x1,x2,sex,age_band\n1,0,1,other,old\n") == Errc::kUnknownLevel);
    CHECK(load_error("y,x1,x2,sex,age_band\n1,zero,1,male,old\n") == Errc::kNonNumericFeature);
    CHECK(load_error("y,x1,x2,sex,age_band\n1,,1,male,old\n") == Errc::kMissingValue);
    CHECK(load_error("y,x1,x2,sex,age_band\n1,0,1,,old\n") == Errc::kMissingValue);
    CHECK(load_error("y,x1,x2,sex,age_band\n2,0,1,male,old\n") == Errc::kInvalidLabel);
    CHECK(load_error("y,x1,x2,sex,age_band\n") == Errc::kMissingValue);
  }

  TEST_CASE("csv round-trips through the writer") {
    const auto f = figure_one();
    std::ostringstream out;
    write_dataset_csv(out, f.data, f.config);
    std::istringstream in(out.str());
    const Dataset back = load_dataset(in, f.config);
    CHECK(back.fingerprint() == f.data.fingerprint());
  }

  TEST_CASE("splits are disjoint, seeded and stratified") {
    TaskOptions t;
    t.n = 1000;
    t.seed = 3;
    const Dataset d = random_task(t);
    SplitOptions o;
    o.seed = 11;
    const auto a = split_dataset(d, o);
    const auto b = split_dataset(d, o);
    CHECK(a.assign.fingerprint() == b.assign.fingerprint());
    CHECK(a.test.fingerprint() == b.test.fingerprint());
    CHECK(a.test.n() == 200);
    CHECK(a.prune.n() == 200);
    CHECK(a.assign.n() == 600);
    o.seed = 12;
    CHECK(split_dataset(d, o).test.fingerprint() != a.test.fingerprint());

    // Each (group, label) stratum lands in the test split close to 20%.
    for (const auto& g : d.schema().full_groups()) {
      const double all = static_cast<double>(rows_matching(d, g).size());
      const double held = static_cast<double>(rows_matching(a.test, g).size());
      if (all >= 20) CHECK(std::abs(held / all - 0.2) < 0.05);
    }
  }

  TEST_CASE("shared assign and prune reuse the training rows") {
    const Dataset d = random_task({});
    SplitOptions o;
    o.shared_assign_prune = true;
    const auto s = split_dataset(d, o);
    CHECK(s.shared_assign_prune);
    CHECK(s.assign.fingerprint() == s.prune.fingerprint());
    CHECK(s.assign.n() + s.test.n() == d.n());
  }

  TEST_CASE("bad split fractions are rejected") {
    const Dataset d = random_task({});
    SplitOptions o;
    o.test_fraction = 0.6;
    o.prune_fraction = 0.5;
    CHECK_THROWS_AS(split_dataset(d, o), Error);
    o.test_fraction = 0.0;
    CHECK_THROWS_AS(split_dataset(d, o), Error);
  }

  TEST_CASE("restriction keeps exactly the covered rows") {
    const auto f = figure_one();
    const ReportingGroup female = ReportingGroup::none(2).with(0, 0);
    CHECK(restrict_to(f.data, female).n() == 49);
    CHECK(restrict_to(f.data, ReportingGroup({1, 1})).n() == 27);
    CHECK(restrict_to(f.data, ReportingGroup::none(2)).n() == 101);
    const auto counts = group_counts(f.data);
    REQUIRE(counts.size() == 4);
    CHECK(counts[0].n == 24);
    CHECK(counts[0].positives == 0);
    CHECK(counts[1].positives == 25);
    CHECK(counts[3].negatives == 27);
  }

  TEST_CASE("encodings widen the feature vector") {
    const auto schema = two_by_three();
    CHECK(encoded_width(schema, 2, Encoding::kNone) == 2);
    CHECK(encoded_width(schema, 2, Encoding::kOneHot) == 2 + 1 + 2);
    CHECK(encoded_width(schema, 2, Encoding::kIntersectional) == 2 + 5);

    const std::vector<double> x{0.5, -1.0};
    std::vector<double> out(5);
    encode_row(schema, x, ReportingGroup({1, 2}), Encoding::kOneHot, out);
    CHECK(out == std::vector<double>{0.5, -1.0, 1.0, 0.0, 1.0});
    std::vector<double> inter(7);
    encode_row(schema, x, ReportingGroup({0, 0}), Encoding::kIntersectional, inter);
    CHECK(inter == std::vector<double>{0.5, -1.0, 0, 0, 0, 0, 0});
    encode_row(schema, x, ReportingGroup({1, 1}), Encoding::kIntersectional, inter);
    CHECK(inter[2 + 3] == 1.0);
    CHECK_THROWS_AS(encode_row(schema, x, ReportingGroup({1, kNotReported}), Encoding::kOneHot, out), Error);
  }
}
