#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <set>
#include <string>

#include "procal/dataset_io.hpp"
#include "procal/error.hpp"
#include "test_support.hpp"

namespace procal {
namespace {

using testing::scratch_dir;

std::filesystem::path write_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream(path, std::ios::binary) << body;
  return path;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kIo;
}

// Binary embedding file assembled by hand, independent of the writer.
std::string binary_embedding(std::size_t n, std::size_t d, std::size_t payload_bytes,
                             bool with_ids) {
  const std::string header = "{\"n\":" + std::to_string(n) + ",\"d\":" + std::to_string(d) +
                             ",\"dtype\":\"f32\",\"order\":\"row-major\"}";
  std::string out = "PROCALEM";
  const auto len = static_cast<std::uint32_t>(header.size());
  out.append(reinterpret_cast<const char*>(&len), 4);
  out += header;
  for (std::size_t i = 0; i < payload_bytes / 4; ++i) {
    const float v = static_cast<float>(i) * 0.5f;
    out.append(reinterpret_cast<const char*>(&v), 4);
  }
  out.append(payload_bytes % 4, '\0');
  if (with_ids) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::int64_t id = 100 + static_cast<std::int64_t>(i);
      out.append(reinterpret_cast<const char*>(&id), 8);
    }
  }
  return out;
}

TEST(Softmax, UniformLogits) {
  const double z[] = {0, 0, 0, 0};
  const auto r = softmax_confidence(z);
  EXPECT_EQ(r.label, 0);
  EXPECT_DOUBLE_EQ(r.confidence, 0.25);
}

TEST(Softmax, LargeLogitDoesNotOverflow) {
  const double z[] = {1000, 0};
  const auto r = softmax_confidence(z);
  EXPECT_EQ(r.label, 0);
  EXPECT_NEAR(r.confidence, 1.0, 1e-12);
  EXPECT_TRUE(std::isfinite(r.confidence));
}

TEST(Softmax, ClosedForm) {
  const double z[] = {1, 2, 3};
  const auto r = softmax_confidence(z);
  EXPECT_EQ(r.label, 2);
  const double e1 = std::exp(1.0), e2 = std::exp(2.0), e3 = std::exp(3.0);
  EXPECT_NEAR(r.confidence, e3 / (e1 + e2 + e3), 1e-15);
  EXPECT_NEAR(r.confidence, 0.66524, 1e-5);
}

TEST(Softmax, ShiftInvariance) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> z(5), shifted(5);
    const double c = testing::uniform(rng, -50, 50);
    for (std::size_t j = 0; j < z.size(); ++j) {
      z[j] = testing::uniform(rng, -10, 10);
      shifted[j] = z[j] + c;
    }
    const auto a = softmax_confidence(z);
    const auto b = softmax_confidence(shifted);
    EXPECT_EQ(a.label, b.label);
    EXPECT_NEAR(a.confidence, b.confidence, 1e-12);
    EXPECT_GE(a.confidence, 1.0 / 5.0);
    EXPECT_LT(a.confidence, 1.0);
  }
}

TEST(Softmax, RejectsNonFinite) {
  const double z[] = {0.0, std::nan("")};
  EXPECT_EQ(code_of([&] { softmax_confidence(z); }), ErrorCode::kNonFinite);
}

TEST(PredictionTable, SymmetricLogits) {
  const auto dir = scratch_dir("io_sym");
  const auto path = write_file(dir / "p.csv",
                               "id,true_label,pred_label,confidence,logit_0,logit_1\n"
                               "0,0,0,0.5,0,0\n1,1,0,0.5,0,0\n2,0,0,0.5,0,0\n");
  const auto preds = load_prediction_table(path);
  ASSERT_EQ(preds.size(), 3u);
  EXPECT_EQ(preds.num_classes, 2);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(preds.confidence[i], 0.5);
    EXPECT_EQ(preds.pred_label[i], 0);
  }
}

TEST(PredictionTable, RecomputesConfidenceFromLogits) {
  const auto dir = scratch_dir("io_logit");
  const auto path = write_file(dir / "p.csv",
                               "id,true_label,pred_label,confidence,logit_0,logit_1\n"
                               "7,0,0,0.9999546,10,0\n");
  const auto preds = load_prediction_table(path);
  EXPECT_EQ(preds.pred_label[0], 0);
  EXPECT_NEAR(preds.confidence[0], 1.0 / (1.0 + std::exp(-10.0)), 1e-15);
}

TEST(PredictionTable, ErrorCodes) {
  const auto dir = scratch_dir("io_err");
  const std::string head = "id,true_label,pred_label,confidence,logit_0,logit_1\n";
  EXPECT_EQ(code_of([&] { load_prediction_table(write_file(dir / "a.csv", head + "0,2,0,0.5,0,0\n")); }),
            ErrorCode::kLabelOutOfRange);
  EXPECT_EQ(code_of([&] { load_prediction_table(write_file(dir / "b.csv", "id,label,conf\n0,0,0.5\n")); }),
            ErrorCode::kMalformedHeader);
  EXPECT_EQ(code_of([&] { load_prediction_table(write_file(dir / "c.csv", head + "0,0,0,0.5,nan,0\n")); }),
            ErrorCode::kNonFinite);
  EXPECT_EQ(code_of([&] {
              load_prediction_table(write_file(dir / "d.csv", head + "0,0,0,0.5,0,0\n0,1,0,0.5,0,0\n"));
            }),
            ErrorCode::kDuplicateId);
  EXPECT_EQ(code_of([&] { load_prediction_table(write_file(dir / "e.csv", head + "0,0,0,0.7,0,0\n")); }),
            ErrorCode::kConfidenceMismatch);
  EXPECT_EQ(code_of([&] { load_prediction_table(dir / "missing.csv"); }), ErrorCode::kIo);
}

TEST(PredictionTable, RoundTripWithinTolerance) {
  const auto dir = scratch_dir("io_rt");
  std::mt19937_64 rng(11);
  PredictionSet preds;
  preds.num_classes = 4;
  for (int i = 0; i < 300; ++i) {
    std::vector<double> z(4);
    for (double& v : z) v = testing::uniform(rng, -5, 5);
    const auto sm = softmax_confidence(z);
    preds.sample_id.push_back(1000 - i);
    preds.true_label.push_back(static_cast<int>(rng() % 4));
    preds.pred_label.push_back(sm.label);
    preds.confidence.push_back(sm.confidence);
    preds.logits.insert(preds.logits.end(), z.begin(), z.end());
  }
  write_prediction_table(preds, dir / "rt.csv");
  const auto back = load_prediction_table(dir / "rt.csv");
  ASSERT_EQ(back.size(), preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    EXPECT_EQ(back.sample_id[i], preds.sample_id[i]);
    EXPECT_EQ(back.true_label[i], preds.true_label[i]);
    EXPECT_EQ(back.pred_label[i], preds.pred_label[i]);
    EXPECT_NEAR(back.confidence[i], preds.confidence[i], 1e-9);
  }
  for (std::size_t i = 0; i < preds.logits.size(); ++i) {
    EXPECT_NEAR(back.logits[i], preds.logits[i], 1e-9);
  }
}

TEST(Embeddings, BinaryExactSize) {
  const auto dir = scratch_dir("emb_bin");
  const auto path = write_file(dir / "e.bin", binary_embedding(2, 3, 24, false));
  const auto m = load_embeddings(path);
  EXPECT_EQ(m.rows(), 2u);
  EXPECT_EQ(m.dim, 3u);
  EXPECT_EQ(m.row(1)[2], 2.5f);
}

TEST(Embeddings, BinaryWithIds) {
  const auto dir = scratch_dir("emb_ids");
  const auto m = load_embeddings(write_file(dir / "e.bin", binary_embedding(2, 3, 24, true)));
  EXPECT_EQ(m.sample_id[0], 100);
  EXPECT_EQ(m.sample_id[1], 101);
}

TEST(Embeddings, PayloadLengthMismatch) {
  const auto dir = scratch_dir("emb_short");
  const auto path = write_file(dir / "e.bin", binary_embedding(2, 3, 20, false));
  try {
    load_embeddings(path);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kPayloadLengthMismatch);
    EXPECT_NE(std::string(e.what()).find("payload length mismatch"), std::string::npos);
  }
}

TEST(Embeddings, CsvRow) {
  const auto dir = scratch_dir("emb_csv");
  const auto m = load_embeddings(write_file(dir / "e.csv", "42,0.0,1.0\n"));
  ASSERT_EQ(m.rows(), 1u);
  EXPECT_EQ(m.dim, 2u);
  EXPECT_EQ(m.sample_id[0], 42);
  EXPECT_EQ(m.row(0)[1], 1.0f);
}

TEST(Embeddings, RejectsDuplicateIdsAndNonFinite) {
  const auto dir = scratch_dir("emb_bad");
  EXPECT_EQ(code_of([&] { load_embeddings(write_file(dir / "a.csv", "1,0.0\n1,2.0\n")); }),
            ErrorCode::kDuplicateId);
  EXPECT_EQ(code_of([&] { load_embeddings(write_file(dir / "b.csv", "1,inf\n")); }),
            ErrorCode::kNonFinite);
}

TEST(Embeddings, BinaryRoundTripIsBitExact) {
  const auto dir = scratch_dir("emb_rt");
  std::mt19937_64 rng(3);
  const auto m = testing::random_embeddings(rng, 50, 7, 9);
  write_embeddings_binary(m, dir / "m.bin");
  const auto back = load_embeddings(dir / "m.bin");
  EXPECT_EQ(back.dim, m.dim);
  EXPECT_EQ(back.sample_id, m.sample_id);
  ASSERT_EQ(back.values.size(), m.values.size());
  EXPECT_EQ(std::memcmp(back.values.data(), m.values.data(), m.values.size() * 4), 0);
  write_embeddings_csv(m, dir / "m.csv");
  EXPECT_EQ(load_embeddings(dir / "m.csv").values, m.values);
}

PredictionSet simple_preds(std::size_t n) {
  PredictionSet p;
  p.num_classes = 2;
  for (std::size_t i = 0; i < n; ++i) {
    p.sample_id.push_back(static_cast<std::int64_t>(i) * 3);
    p.true_label.push_back(static_cast<int>(i % 2));
    p.pred_label.push_back(0);
    p.confidence.push_back(0.6);
  }
  return p;
}

std::set<std::int64_t> ids_of(const PredictionSet& p) {
  return {p.sample_id.begin(), p.sample_id.end()};
}

TEST(Split, DeterministicUnderSeed) {
  const auto preds = simple_preds(10);
  const auto a = split_dataset(preds, nullptr, {0.5, 2020});
  const auto b = split_dataset(preds, nullptr, {0.5, 2020});
  EXPECT_EQ(a.first.rows, b.first.rows);
  EXPECT_EQ(a.second.rows, b.second.rows);
}

TEST(Split, FloorRule) {
  const auto [cal, eval] = split_dataset(simple_preds(25), nullptr, {0.5, 2020});
  EXPECT_EQ(cal.preds.size(), 12u);
  EXPECT_EQ(eval.preds.size(), 13u);
}

TEST(Split, DisjointAndExhaustiveForManySeeds) {
  const auto preds = simple_preds(37);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto [cal, eval] = split_dataset(preds, nullptr, {0.3, seed});
    auto all = ids_of(cal.preds);
    for (auto id : eval.preds.sample_id) EXPECT_TRUE(all.insert(id).second);
    EXPECT_EQ(all, ids_of(preds));
  }
}

TEST(Split, DifferentSeedsGiveDifferentPartitions) {
  const auto preds = simple_preds(200);
  const auto a = split_dataset(preds, nullptr, {0.5, 2020});
  const auto b = split_dataset(preds, nullptr, {0.5, 2021});
  EXPECT_NE(ids_of(a.first.preds), ids_of(b.first.preds));
}

TEST(Split, EmbeddingRowsFollowPredictions) {
  std::mt19937_64 rng(5);
  const auto preds = simple_preds(40);
  auto embs = testing::random_embeddings(rng, 40, 3);
  for (std::size_t i = 0; i < 40; ++i) embs.sample_id[i] = preds.sample_id[i];
  const auto [cal, eval] = split_dataset(preds, &embs, {0.5, 1});
  ASSERT_TRUE(cal.embs.has_value());
  for (std::size_t r = 0; r < cal.rows.size(); ++r) {
    EXPECT_EQ(cal.embs->sample_id[r], cal.preds.sample_id[r]);
    EXPECT_EQ(cal.embs->row(r)[0], embs.row(cal.rows[r])[0]);
  }
  embs.sample_id[0] = -1;
  EXPECT_EQ(code_of([&] { split_dataset(preds, &embs, {0.5, 1}); }), ErrorCode::kMisalignedIds);
}

TEST(Split, RejectsFractionOutsideOpenInterval) {
  EXPECT_THROW(split_dataset(simple_preds(10), nullptr, {0.0, 1}), Error);
  EXPECT_THROW(split_dataset(simple_preds(10), nullptr, {1.0, 1}), Error);
}

}  // namespace
}  // namespace procal
