#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "helpers.hpp"
#include "measfid/json_io.hpp"

using namespace measfid;
using measfid::io::json;

TEST(JsonIo, PovmRoundTripIsBitExact) {
  std::mt19937_64 rng(41);
  const Povm p = testkit::random_povm(3, 4, rng);
  const json j = json::parse(io::dump(io::povm_to_json(p)));
  const Povm back = io::povm_from_json(j, Tolerances{1e-9, 1e-9, 1e-9, 1e-9});
  ASSERT_EQ(back.size(), p.size());
  for (std::size_t k = 0; k < p.size(); ++k) EXPECT_TRUE(back.effect(k) == p.effect(k));
}

TEST(JsonIo, PvmRoundTrip) {
  std::mt19937_64 rng(42);
  const Rank1Pvm pvm = Rank1Pvm::from_basis(testkit::random_unitary(4, rng), 1e-9);
  const Rank1Pvm back = io::pvm_from_json(json::parse(io::dump(io::pvm_to_json(pvm))));
  EXPECT_TRUE(back.basis_matrix() == pvm.basis_matrix());
}

TEST(JsonIo, DeviceRoundTripWithOutputStates) {
  const Rank1Pvm pvm = Rank1Pvm::computational(2);
  const NoisyDevice dev(testkit::table1_povm(0.99, 0.05), testkit::projector_outputs(pvm), 77);
  const json j = io::device_to_json(dev);
  const NoisyDevice back = io::device_from_json(j);
  EXPECT_EQ(back.seed(), 77u);
  ASSERT_TRUE(back.has_output_states());
  EXPECT_TRUE(back.output_state(1).matrix() == dev.output_state(1).matrix());
  EXPECT_EQ(io::device_from_json(j, 5).seed(), 5u);
}

TEST(JsonIo, SchemaErrors) {
  auto kind_of = [](const json& j) {
    try {
      io::povm_from_json(j);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::numerical_failure;
  };
  EXPECT_EQ(kind_of(json::object()), ErrorKind::schema);
  EXPECT_EQ(kind_of(json{{"dim", 2}, {"effects", json::array()}}), ErrorKind::schema);
  EXPECT_EQ(kind_of(json{{"dim", 2}, {"effects", {{{{1, 0}, {0, 0}}}}}}), ErrorKind::schema);
  EXPECT_EQ(kind_of(json{{"dim", 0}, {"effects", json::array()}}), ErrorKind::schema);
  EXPECT_EQ(kind_of(json{{"dim", 1}, {"effects", {{{{1, 0, 3}}}}}}), ErrorKind::schema);
  // well formed but not complete
  EXPECT_EQ(kind_of(json{{"dim", 1}, {"effects", {{{{0.5, 0}}}}}}), ErrorKind::not_complete);
  EXPECT_EQ(kind_of(json{{"dim", 1}, {"effects", {{{{1.0, 0}}}}}}), ErrorKind::numerical_failure);
}

TEST(JsonIo, ReadErrors) {
  const auto dir = std::filesystem::temp_directory_path() / "measfid_json_io_test";
  std::filesystem::create_directories(dir);
  try {
    io::read_json_file(dir / "missing.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::io);
  }
  io::write_file_atomic(dir / "bad.json", "{not json");
  try {
    io::read_json_file(dir / "bad.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::schema);
  }
  EXPECT_FALSE(std::filesystem::exists(dir / "bad.json.tmp"));
  std::filesystem::remove_all(dir);
}

TEST(JsonIo, ProtocolReportFields) {
  const Rank1Pvm pvm = Rank1Pvm::computational(2);
  NoisyDevice dev(pvm.as_povm(), testkit::projector_outputs(pvm), 3);
  EstimationConfig cfg;
  cfg.exact_probabilities = true;
  cfg.exhaustive_pairs = true;
  const json j = io::to_json(run_protocol_states(dev, pvm, cfg));
  EXPECT_DOUBLE_EQ(j["lb_hat"].get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(j["ub_hat"].get<double>(), 0.0);
  EXPECT_EQ(j["K"].get<int>(), 4);
  EXPECT_TRUE(j["trial_accounting"].contains("n2"));
  EXPECT_EQ(j["config"]["estimation"], "per_pair");
  EXPECT_EQ(j["device"]["seed"].get<int>(), 3);
}
