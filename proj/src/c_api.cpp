#include "edgeprompt/edgeprompt.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <new>
#include <string>

#include <json.hpp>

#include "edgeprompt/checkpoint.hpp"
#include "edgeprompt/error.hpp"
#include "edgeprompt/experiment.hpp"
#include "edgeprompt/graph.hpp"
#include "edgeprompt/theory.hpp"

struct ep_dataset {
    edgeprompt::LabeledDataset ds;
};

struct ep_checkpoint {
    edgeprompt::Checkpoint ckpt;
};

namespace {

using edgeprompt::ErrorKind;
using json = nlohmann::json;

thread_local std::string g_last_error;

ep_status status_of(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Shape: return EP_ERR_SHAPE;
        case ErrorKind::Index: return EP_ERR_INDEX;
        case ErrorKind::Parse: return EP_ERR_PARSE;
        case ErrorKind::Validation: return EP_ERR_VALIDATION;
        case ErrorKind::Config: return EP_ERR_CONFIG;
        case ErrorKind::Format: return EP_ERR_FORMAT;
        case ErrorKind::Range: return EP_ERR_RANGE;
        case ErrorKind::Compatibility: return EP_ERR_COMPATIBILITY;
        case ErrorKind::InsufficientData: return EP_ERR_INSUFFICIENT_DATA;
        case ErrorKind::State: return EP_ERR_STATE;
        case ErrorKind::Io: return EP_ERR_IO;
        case ErrorKind::Domain: return EP_ERR_DOMAIN;
    }
    return EP_ERR_INTERNAL;
}

ep_status fail(ep_status status, std::string message) {
    g_last_error = std::move(message);
    return status;
}

// Runs f, translating every exception into a status. Nothing escapes.
template <typename F>
ep_status guarded(F&& f) noexcept {
    try {
        f();
        return EP_OK;
    } catch (const edgeprompt::Error& e) {
        return fail(status_of(e.kind()), e.what());
    } catch (const json::exception& e) {
        return fail(EP_ERR_PARSE, e.what());
    } catch (const std::bad_alloc&) {
        return fail(EP_ERR_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return fail(EP_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(EP_ERR_INTERNAL, "unknown failure");
    }
}

char* copy_out(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.data(), s.size() + 1);
    return out;
}

#define EP_REQUIRE(cond, what) \
    if (!(cond)) return fail(EP_ERR_INVALID_ARGUMENT, what)

}  // namespace

extern "C" {

const char* ep_version(void) { return "1.0.0"; }

const char* ep_status_name(ep_status status) {
    switch (status) {
        case EP_OK: return "ok";
        case EP_ERR_INVALID_ARGUMENT: return "invalid-argument";
        case EP_ERR_SHAPE: return "shape";
        case EP_ERR_INDEX: return "index";
        case EP_ERR_PARSE: return "parse";
        case EP_ERR_VALIDATION: return "validation";
        case EP_ERR_CONFIG: return "config";
        case EP_ERR_FORMAT: return "format";
        case EP_ERR_RANGE: return "range";
        case EP_ERR_COMPATIBILITY: return "compatibility";
        case EP_ERR_INSUFFICIENT_DATA: return "insufficient-data";
        case EP_ERR_STATE: return "state";
        case EP_ERR_IO: return "io";
        case EP_ERR_DOMAIN: return "domain";
        case EP_ERR_INTERNAL: return "internal";
    }
    return "unknown";
}

int ep_status_exit_code(ep_status status) {
    switch (status) {
        case EP_OK: return 0;
        case EP_ERR_INVALID_ARGUMENT:
        case EP_ERR_PARSE:
        case EP_ERR_CONFIG:
        case EP_ERR_RANGE:
        case EP_ERR_COMPATIBILITY: return 2;
        default: return 1;
    }
}

const char* ep_last_error(void) { return g_last_error.c_str(); }

void ep_string_free(char* s) { std::free(s); }

ep_status ep_dataset_load(const char* path, ep_dataset** out) {
    EP_REQUIRE(path && out, "ep_dataset_load: NULL argument");
    *out = nullptr;
    return guarded([&] { *out = new ep_dataset{edgeprompt::load_dataset(path)}; });
}

ep_status ep_dataset_info(const ep_dataset* ds, char** json_out) {
    EP_REQUIRE(ds && json_out, "ep_dataset_info: NULL argument");
    return guarded([&] {
        std::size_t nodes = 0, edges = 0;
        for (const auto& g : ds->ds.graphs) {
            nodes += g.num_nodes();
            edges += g.num_edges();
        }
        json j{{"task", edgeprompt::to_string(ds->ds.task)},
               {"num_classes", ds->ds.num_classes},
               {"graphs", ds->ds.graphs.size()},
               {"nodes", nodes},
               {"edges", edges},
               {"feature_dim", ds->ds.feature_dim()}};
        *json_out = copy_out(j.dump());
    });
}

void ep_dataset_free(ep_dataset* ds) { delete ds; }

ep_status ep_checkpoint_load(const char* path, ep_checkpoint** out) {
    EP_REQUIRE(path && out, "ep_checkpoint_load: NULL argument");
    *out = nullptr;
    return guarded([&] { *out = new ep_checkpoint{edgeprompt::load_checkpoint(path)}; });
}

ep_status ep_checkpoint_digest(const ep_checkpoint* ckpt, char** hex_out) {
    EP_REQUIRE(ckpt && hex_out, "ep_checkpoint_digest: NULL argument");
    return guarded([&] { *hex_out = copy_out(edgeprompt::checkpoint_digest(ckpt->ckpt)); });
}

ep_status ep_checkpoint_info(const ep_checkpoint* ckpt, char** json_out) {
    EP_REQUIRE(ckpt && json_out, "ep_checkpoint_info: NULL argument");
    return guarded([&] {
        const auto& c = ckpt->ckpt;
        json j{{"kind", edgeprompt::to_string(c.model.kind())},
               {"dims", c.model.dims()},
               {"strategy", c.strategy},
               {"seed", c.seed},
               {"epochs", c.epochs},
               {"metadata", c.metadata}};
        *json_out = copy_out(j.dump());
    });
}

void ep_checkpoint_free(ep_checkpoint* ckpt) { delete ckpt; }

ep_status ep_settings_parse(const char* text, char** json_out) {
    EP_REQUIRE(text && json_out, "ep_settings_parse: NULL argument");
    return guarded([&] {
        json j = json::object();
        for (const auto& [k, v] : edgeprompt::parse_settings(text)) j[k] = v;
        *json_out = copy_out(j.dump());
    });
}

ep_status ep_run(const char* command, const char* settings_json, char** result_json) {
    EP_REQUIRE(command && settings_json && result_json, "ep_run: NULL argument");
    *result_json = nullptr;
    return guarded([&] {
        const json j = json::parse(settings_json);
        if (!j.is_object()) throw edgeprompt::Error(ErrorKind::Config, "settings must be a JSON object");
        edgeprompt::Settings settings;
        for (const auto& [k, v] : j.items()) {
            if (!v.is_string())
                throw edgeprompt::Error(ErrorKind::Config, "setting '" + k + "' must be a string");
            settings[k] = v.get<std::string>();
        }
        *result_json = copy_out(edgeprompt::run_command(command, settings));
    });
}

ep_status ep_theorem1_max_ratio(double p, double q, double* value_out, int* bounded_out) {
    EP_REQUIRE(value_out && bounded_out, "ep_theorem1_max_ratio: NULL argument");
    return guarded([&] {
        const auto r = edgeprompt::theorem1_max_ratio(p, q);
        *value_out = r.value;
        *bounded_out = r.bounded ? 1 : 0;
    });
}

ep_status ep_lemma1_coefficient(const ep_dataset* ds, size_t graph_index, double epsilon, double* value_out) {
    EP_REQUIRE(ds && value_out, "ep_lemma1_coefficient: NULL argument");
    return guarded([&] {
        if (graph_index >= ds->ds.graphs.size())
            throw edgeprompt::Error(ErrorKind::Index, "graph index " + std::to_string(graph_index) +
                                                          " out of range");
        *value_out = edgeprompt::lemma1_coefficient(ds->ds.graphs[graph_index], epsilon);
    });
}

}  // extern "C"
