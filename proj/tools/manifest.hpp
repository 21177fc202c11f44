#pragma once

#include <json.hpp>

#include <string>

namespace gatflfm::cli {

/// Streaming SHA-256 of a file's contents, lowercase hex.
std::string sha256_file(const std::string& path);

/// Collects the resolved configuration and content hashes of every file a
/// command reads or writes, keyed by name relative to the run directory so
/// two runs in different directories can be compared byte for byte.
class Manifest {
public:
    Manifest(std::string command, nlohmann::json resolved_config, std::uint64_t seed,
             int threads);

    void add_input(const std::string& name, const std::string& path);
    void add_output(const std::string& name, const std::string& path);
    void add_note(const std::string& key, const nlohmann::json& value);

    void write(const std::string& out_dir) const;

private:
    nlohmann::json data_;
};

} // namespace gatflfm::cli
