#pragma once

#include <map>
#include <string>
#include <vector>

#include "xsm/mesh_gen.hpp"
#include "xsm/model.hpp"
#include "xsm/specdec.hpp"
#include "xsm/training.hpp"

namespace xsm {

// Flat `section.key = value` configuration with a fixed key registry.
// Unknown keys are rejected; every key can be overridden by a CLI flag of the
// same dotted name (--section.key value or --section.key=value).
class RunConfig {
public:
    RunConfig();  // defaults

    void load_file(const std::string& path);
    // Consumes recognized --section.key flags from args; leaves the rest.
    void apply_cli(std::vector<std::string>& args);
    void set(const std::string& key, const std::string& value);

    const std::string& get_str(const std::string& key) const;
    int64_t get_i64(const std::string& key) const;
    double get_f64(const std::string& key) const;
    uint64_t get_u64(const std::string& key) const;

    // Fully resolved config, echoed into output directories.
    void write(const std::string& path) const;

    BackboneConfig backbone_config() const;
    Vocabulary vocabulary() const;
    MeshGenOptions gen_options() const;
    FamilyMix family_mix() const;
    DecodeConfig decode_config() const;
    TrainConfig train_config(TrainStage stage) const;

    static std::vector<double> parse_grid(const std::string& csv);

private:
    std::map<std::string, std::string> values_;
};

}  // namespace xsm
