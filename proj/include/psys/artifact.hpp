#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "psys/assembly.hpp"

namespace psys {

inline constexpr int kArtifactFormatVersion = 1;

using Json = nlohmann::json;

Json report_to_json(const ReportingGroup& r);
ReportingGroup report_from_json(const Json& j, std::size_t k);

Json schema_to_json(const GroupSchema& schema);
GroupSchema schema_from_json(const Json& j);

Json certificate_to_json(const GainCertificate& c);
GainCertificate certificate_from_json(const Json& j);
// {metric, gain, p_value, n_validation} as shown to people deciding whether
// to report.
Json gain_to_json(const GainCertificate& c);

Json model_to_json(const TrainedModel& m);
TrainedModel model_from_json(const Json& j);
std::vector<TrainedModel> models_from_json(const Json& j);

Json system_to_json(const ParticipatorySystem& s);
// Validates structure and the participatory invariants; throws
// Errc::kInvalidArtifact on any problem.
ParticipatorySystem system_from_json(const Json& j);

std::string serialize_system(const ParticipatorySystem& s);
ParticipatorySystem parse_system(std::string_view text);
void save_system(const ParticipatorySystem& s, const std::string& path);
ParticipatorySystem load_system(const std::string& path);

// Tree, assignments and gains without model parameters.
Json public_system_json(const ParticipatorySystem& s);

// Signed percentage points rounded to 0.1, e.g. "+21.5%".
std::string format_gain(double gain);

std::string hex64(std::uint64_t v);
std::uint64_t parse_hex64(std::string_view s);

}  // namespace psys
