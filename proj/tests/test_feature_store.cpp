#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "replimarket/feature_store.hpp"
#include "support/fixtures.hpp"

using namespace replimarket;

namespace {

std::string csv_header(bool with_outcome = true) {
  std::string h = "claim_id,domain";
  if (with_outcome) h += ",outcome";
  for (std::size_t i = 0; i < kFeatureCount; ++i) h += "," + feature_column(i);
  return h + "\n";
}

std::string csv_row(const std::string& id, const std::string& domain, const std::string& outcome,
                    double fill, const std::string& override_f03 = "") {
  std::string r = id + "," + domain + "," + outcome;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    r += ",";
    r += (i == 2 && !override_f03.empty()) ? override_f03 : std::to_string(fill + i);
  }
  return r + "\n";
}

}  // namespace

TEST(CoreVocabulary, ParsesSidesOutcomesAndDisciplines) {
  EXPECT_EQ(parse_side("will-replicate"), Side::yes);
  EXPECT_EQ(parse_side("no"), Side::no);
  EXPECT_FALSE(parse_side("maybe"));
  EXPECT_EQ(parse_outcome("NR"), Outcome::not_replicated);
  EXPECT_EQ(parse_outcome("1"), Outcome::replicated);
  EXPECT_EQ(parse_domain("econ"), Domain::economics);
  EXPECT_EQ(parse_domain("marketing/org-behavior"), Domain::marketing);
  for (Domain d : kAllDomains) EXPECT_EQ(parse_domain(to_string(d)), d);
  EXPECT_FALSE(parse_domain("astrology"));
}

TEST(CoreVocabulary, FixedFormatting) {
  EXPECT_EQ(format_money(25.0), "25.0000");
  EXPECT_EQ(format_money(24.49875000520829), "24.4988");
  EXPECT_EQ(format_price(0.5), "0.500");
  EXPECT_EQ(format_price(0.8427), "0.843");
}

TEST(FeatureStore, ParsesCsvWithMissingValuesAndTitles) {
  std::stringstream in;
  in << "claim_id,domain,outcome,title";
  for (std::size_t i = 0; i < kFeatureCount; ++i) in << "," << feature_column(i);
  in << "\n";
  in << "c1,economics,R,\"Title, with comma\"";
  for (std::size_t i = 0; i < kFeatureCount; ++i) in << "," << (i == 4 ? "NA" : std::to_string(i));
  in << "\n";
  const ClaimSet set = parse_claims_csv(in);
  ASSERT_EQ(set.size(), 1u);
  const auto& r = set.records[0];
  EXPECT_EQ(r.claim_id, "c1");
  EXPECT_EQ(r.title, "Title, with comma");
  EXPECT_EQ(r.outcome, Outcome::replicated);
  EXPECT_TRUE(std::isnan(r.features[4]));
  EXPECT_DOUBLE_EQ(r.features[40], 40.0);
}

TEST(FeatureStore, UnlabeledTestRowsAreAllowed) {
  std::stringstream in(csv_header() + csv_row("t1", "psychology", "", 1.0));
  const ClaimSet set = parse_claims_csv(in, SetRole::test);
  EXPECT_FALSE(set.records[0].outcome);
  EXPECT_EQ(set.role, SetRole::test);
}

TEST(FeatureStore, RejectsWrongFeatureCount) {
  std::string header = "claim_id,domain";
  for (std::size_t i = 0; i < 40; ++i) header += "," + feature_column(i);
  std::stringstream in(header + "\n");
  try {
    parse_claims_csv(in);
    FAIL() << "expected a schema error";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("schema"), std::string::npos);
  }
}

TEST(FeatureStore, NonNumericCellNamesRowAndColumn) {
  std::stringstream in(csv_header() + csv_row("a", "economics", "R", 1.0) +
                       csv_row("b", "economics", "NR", 1.0, "abc"));
  try {
    parse_claims_csv(in);
    FAIL() << "expected a parse error";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("row 2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("f03"), std::string::npos) << msg;
  }
}

TEST(FeatureStore, RejectsDuplicatesUnknownDomainsAndBadOutcomes) {
  std::stringstream dup(csv_header() + csv_row("a", "economics", "R", 1) +
                        csv_row("a", "economics", "R", 2));
  EXPECT_THROW(parse_claims_csv(dup), DataError);
  std::stringstream dom(csv_header() + csv_row("a", "astrology", "R", 1));
  EXPECT_THROW(parse_claims_csv(dom), DataError);
  std::stringstream out(csv_header() + csv_row("a", "economics", "maybe", 1));
  EXPECT_THROW(parse_claims_csv(out), DataError);
}

TEST(FeatureStore, JsonlAcceptsArrayAndKeyedFeatures) {
  std::string arr = R"({"claim_id":"x","domain":"sociology","outcome":"NR","features":[)";
  for (std::size_t i = 0; i < kFeatureCount; ++i) arr += (i ? "," : "") + std::to_string(i);
  arr += "]}\n";
  std::string keyed = R"({"claim_id":"y","domain":"education","outcome":null)";
  for (std::size_t i = 0; i < kFeatureCount; ++i)
    keyed += ",\"" + feature_column(i) + "\":" + (i == 0 ? "null" : std::to_string(i));
  keyed += "}\n";
  std::stringstream in(arr + keyed);
  const ClaimSet set = parse_claims_jsonl(in);
  ASSERT_EQ(set.size(), 2u);
  EXPECT_EQ(set.records[0].outcome, Outcome::not_replicated);
  EXPECT_FALSE(set.records[1].outcome);
  EXPECT_TRUE(std::isnan(set.records[1].features[0]));
  EXPECT_EQ(set.records[1].domain, Domain::education);
}

TEST(FeatureStore, ScalerImputesMedianAndNormalizesToUnitRange) {
  ClaimSet set;
  for (int i = 0; i < 3; ++i) {
    ClaimRecord r;
    r.claim_id = "c" + std::to_string(i);
    r.outcome = Outcome::replicated;
    r.features.fill(static_cast<double>(i) * 10.0);  // 0, 10, 20
    set.records.push_back(r);
  }
  set.records[1].features[0] = kMissing;  // median of {0, 20} = 10
  set.records[2].features[1] = 7.0;       // constant columns aside, f02 = {0, 10, 7}
  for (auto& r : set.records) r.features[2] = 3.0;  // zero range
  const ClaimSet norm = fit_normalize(set);
  EXPECT_DOUBLE_EQ(norm.records[1].features[0], 0.5);
  EXPECT_DOUBLE_EQ(norm.records[2].features[1], 0.7);
  EXPECT_DOUBLE_EQ(norm.records[0].features[2], 0.5);
  for (const auto& r : norm.records)
    for (double v : r.features) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
}

TEST(FeatureStore, TestSetUsesTrainScalerAndClamps) {
  const ClaimSet train = fx::synthetic_training_set();
  const Scaler scaler = fit_scaler(train);
  ClaimSet test;
  test.role = SetRole::test;
  ClaimRecord out_of_range;
  out_of_range.claim_id = "z";
  out_of_range.features.fill(1e9);
  out_of_range.features[1] = -1e9;
  test.records.push_back(out_of_range);
  const ClaimSet norm = apply_normalize(test, scaler);
  EXPECT_DOUBLE_EQ(norm.records[0].features[0], 1.0);
  EXPECT_DOUBLE_EQ(norm.records[0].features[1], 0.0);
  EXPECT_EQ(*norm.scaler, scaler);
}

TEST(FeatureStore, NormalizeIsIdempotentAndRefusesForeignScaler) {
  const ClaimSet train = fx::synthetic_training_set();
  const ClaimSet once = fit_normalize(train);
  const ClaimSet twice = apply_normalize(once, *once.scaler);
  EXPECT_EQ(once, twice);
  Scaler other = *once.scaler;
  other.max[0] += 1.0;
  EXPECT_THROW(apply_normalize(once, other), DataError);
}

TEST(FeatureStore, ScalerFitsOnlyOnNonEmptyTrainingSets) {
  EXPECT_THROW(fit_scaler(ClaimSet{}), DataError);
  ClaimSet test = fx::synthetic_test_set();
  EXPECT_THROW(fit_scaler(test), DataError);
}

TEST(FeatureStore, CsvAndJsonlRoundTripExactly) {
  const auto dir = fx::scratch_dir("fs_roundtrip");
  ClaimSet set = fx::synthetic_training_set();
  set.records[0].title = "quoted \"title\", with comma";
  for (const char* name : {"claims.csv", "claims.jsonl"}) {
    save_claims(dir / name, set);
    const ClaimSet back = ingest(dir / name);
    EXPECT_EQ(back.records, set.records) << name;
  }
}

TEST(FeatureStore, IngestsCorpusSizedFiles) {
  const auto dir = fx::scratch_dir("fs_sizes");
  save_claims(dir / "train.csv", fx::synthetic_training_set());
  save_claims(dir / "test.csv", fx::synthetic_test_set());
  const ClaimSet train = ingest(dir / "train.csv");
  const ClaimSet test = ingest(dir / "test.csv", std::nullopt, SetRole::test);
  EXPECT_EQ(train.size(), 402u);
  EXPECT_EQ(test.size(), 30u);
  std::map<Domain, int> counts;
  for (const auto& r : train.records) ++counts[r.domain];
  for (const auto& [d, n] : fx::corpus_domain_counts()) EXPECT_EQ(counts[d], n);
  EXPECT_THROW(ingest(dir / "missing.csv"), DataError);
}

TEST(FeatureStore, SplitByDomainKeepsScaler) {
  const ClaimSet norm = fit_normalize(fx::synthetic_training_set());
  const ClaimSet econ = split_by_domain(norm, Domain::economics);
  EXPECT_EQ(econ.size(), 99u);
  EXPECT_EQ(econ.scaler, norm.scaler);
}

TEST(FeatureStore, ScalerJsonRoundTrip) {
  const Scaler s = fit_scaler(fx::synthetic_training_set());
  EXPECT_EQ(scaler_from_json(nlohmann::json::parse(to_json(s).dump())), s);
  EXPECT_THROW(scaler_from_json(nlohmann::json::object()), DataError);
}
