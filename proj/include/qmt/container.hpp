#pragma once

#include <string>
#include <vector>

#include "qmt/types.hpp"

#include "json.hpp"

namespace qmt {

// On-disk container: magic "QMT1", u32 LE header length, UTF-8 JSON header,
// then a float32 LE payload (complex values interleaved re,im). The header
// declares {kind, shape, dtype, te_ms, seed, extra...}.

enum class ContainerKind { echoes, kspace, maskset, maps, netparams, report };

const char* kind_name(ContainerKind kind);
ContainerKind kind_from_name(const std::string& name);

// Returns the declared kind without reading the payload.
ContainerKind peek_kind(const std::string& path);

// Returns the parsed JSON header.
nlohmann::json read_header(const std::string& path);

void write_container(const std::string& path, const EchoSeries& series,
                     const nlohmann::json& extra = nlohmann::json::object());
void write_container(const std::string& path, const KSpaceSet& kspace,
                     const nlohmann::json& extra = nlohmann::json::object());
void write_container(const std::string& path, const std::vector<MaskSet>& library,
                     const nlohmann::json& extra = nlohmann::json::object());
void write_container(const std::string& path, const ParamMaps& maps,
                     const nlohmann::json& extra = nlohmann::json::object());
void write_container(const std::string& path, const NetParamsBlob& net,
                     const nlohmann::json& extra = nlohmann::json::object());
void write_container(const std::string& path, const ReportTable& table,
                     const nlohmann::json& extra = nlohmann::json::object());

EchoSeries read_echoes(const std::string& path);
KSpaceSet read_kspace(const std::string& path);
std::vector<MaskSet> read_maskset_library(const std::string& path);
ParamMaps read_maps(const std::string& path);
NetParamsBlob read_netparams(const std::string& path);
ReportTable read_report(const std::string& path);

}  // namespace qmt
