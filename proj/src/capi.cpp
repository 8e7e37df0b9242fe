#include "bondflow/bondflow.h"

#include <cstring>
#include <string>

#include "core/analysis.hpp"
#include "core/model.hpp"

using namespace bondflow;

struct bf_problem {
  Problem prob;
};

struct bf_report {
  CommandResult result;
  std::string json;
};

namespace {

void fill_err(char* err, size_t errlen, const char* what) {
  if (!err || errlen == 0) return;
  std::strncpy(err, what, errlen - 1);
  err[errlen - 1] = '\0';
}

template <typename Fn>
bf_status guarded(char* err, size_t errlen, Fn&& fn) {
  try {
    fn();
    return BF_OK;
  } catch (const ConfigError& e) {
    fill_err(err, errlen, e.what());
    return BF_ERR_CONFIG;
  } catch (const InvariantError& e) {
    fill_err(err, errlen, e.what());
    return BF_ERR_INVARIANT;
  } catch (const IoError& e) {
    fill_err(err, errlen, e.what());
    return BF_ERR_IO;
  } catch (const NumericError& e) {
    fill_err(err, errlen, e.what());
    return BF_ERR_NUMERIC;
  } catch (const std::exception& e) {
    fill_err(err, errlen, e.what());
    return BF_ERR_INTERNAL;
  } catch (...) {
    fill_err(err, errlen, "unknown error");
    return BF_ERR_INTERNAL;
  }
}

}  // namespace

extern "C" {

const char* bf_version(void) { return "bondflow 1.0.0"; }

void bf_options_init(bf_options* opts) {
  if (!opts) return;
  opts->out_dir = nullptr;
  opts->format = nullptr;
  opts->stride = 0;
  opts->threads = 0;
}

bf_status bf_problem_from_string(const char* config_text, bf_problem** out, char* err,
                                 size_t errlen) {
  if (!config_text || !out) {
    fill_err(err, errlen, "null argument");
    return BF_ERR_CONFIG;
  }
  *out = nullptr;
  return guarded(err, errlen, [&] {
    auto* h = new bf_problem{load_problem(config_text)};
    *out = h;
  });
}

bf_status bf_problem_from_file(const char* path, bf_problem** out, char* err, size_t errlen) {
  if (!path || !out) {
    fill_err(err, errlen, "null argument");
    return BF_ERR_CONFIG;
  }
  *out = nullptr;
  return guarded(err, errlen, [&] {
    auto* h = new bf_problem{load_problem_file(path)};
    *out = h;
  });
}

void bf_problem_free(bf_problem* p) { delete p; }

bf_status bf_run(const bf_problem* p, const char* command, const bf_options* opts,
                 bf_report** out, char* err, size_t errlen) {
  if (!p || !command || !out) {
    fill_err(err, errlen, "null argument");
    return BF_ERR_CONFIG;
  }
  *out = nullptr;
  return guarded(err, errlen, [&] {
    RunOptions run = p->prob.run;
    if (opts) {
      if (opts->out_dir) run.out_dir = opts->out_dir;
      if (opts->format) run.format = opts->format;
      if (opts->stride > 0) run.stride = opts->stride;
      if (opts->threads > 0) run.threads = opts->threads;
    }
    if (run.format != "csv" && run.format != "json")
      throw ConfigError("format must be 'csv' or 'json'");
    auto* rep = new bf_report;
    try {
      rep->result = run_command(p->prob, command, run);
      rep->json = rep->result.summary_json();
    } catch (...) {
      delete rep;
      throw;
    }
    *out = rep;
  });
}

int bf_report_passed(const bf_report* r) { return (r && r->result.passed) ? 1 : 0; }

const char* bf_report_json(const bf_report* r) { return r ? r->json.c_str() : ""; }

void bf_report_free(bf_report* r) { delete r; }

}  // extern "C"
