#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gradleak/defense.hpp"
#include "gradleak/gm.hpp"
#include "gradleak/matrix.hpp"
#include "gradleak/simulator.hpp"

namespace gradleak::io {

using Json = nlohmann::json;

inline constexpr int kCaseVersion = 1;

// On-disk gradient capture.  `labels` lists every label instance in
// generation order; `sequence` is set for sequence captures.
struct CaseFile {
    sim::Scenario scenario;
    Matrix delta_w;
    std::vector<std::size_t> labels;
    std::optional<std::vector<std::size_t>> sequence;
    std::optional<defense::DefenseSpec> defense_applied;
    std::optional<std::map<std::size_t, std::string>> vocab;

    std::size_t true_S() const noexcept { return labels.size(); }
    std::vector<std::size_t> label_set() const;
};

CaseFile to_case_file(const sim::GradientCase& gc);

Json to_json(const sim::Scenario& sc);
sim::Scenario scenario_from_json(const Json& j);
Json to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j, const std::string& what);
Json to_json(const defense::DefenseSpec& d);
defense::DefenseSpec defense_from_json(const Json& j);

// Serializes delta_w inline, or as a reference to `sidecar` when given.
Json to_json(const CaseFile& c, const std::optional<std::string>& sidecar = std::nullopt);
// `base` resolves a sidecar reference.
CaseFile case_from_json(const Json& j, const std::filesystem::path& base = {});

// Writes PATH (and PATH with a .grd extension when `grd` is set).
void write_case(const std::filesystem::path& path, const CaseFile& c, bool grd = false);
CaseFile read_case(const std::filesystem::path& path);

// .grd: "GRD1", u32 d, u32 C, d*C float64, all little-endian, row-major.
void write_grd(const std::filesystem::path& path, const Matrix& m);
Matrix read_grd(const std::filesystem::path& path);

Json to_json(const gm::ToyDecoder& dec);
gm::ToyDecoder decoder_from_json(const Json& j);
void write_decoder(const std::filesystem::path& path, const gm::ToyDecoder& dec);
gm::ToyDecoder read_decoder(const std::filesystem::path& path);

Json read_json(const std::filesystem::path& path);
// Temp file in the target directory, then rename.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
void write_json_atomic(const std::filesystem::path& path, const Json& j);

}  // namespace gradleak::io
