/*
 * Copyright 2026 The Prepsearch Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


/* C interface to prepsearch. Every call returns a ps_status; on failure
 * ps_last_error() describes the problem (per thread, valid until the next
 * call on that thread). Strings returned from a handle live as long as the
 * handle; strings returned through char** must be released with
 * ps_string_free. */

#ifndef PREPSEARCH_PREPSEARCH_H_
#define PREPSEARCH_PREPSEARCH_H_

#include <stddef.h>

#if defined(_WIN32)
#define PS_API __declspec(dllexport)
#else
#define PS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ps_status {
  PS_OK = 0,
  PS_ERR_INVALID_ARGUMENT = 1,
  PS_ERR_NOT_FOUND = 2,
  PS_ERR_DATA = 3,
  PS_ERR_DIVERGENCE = 4,
  PS_ERR_INTERNAL = 5
} ps_status;

typedef struct ps_result ps_result;

PS_API const char* ps_version(void);
PS_API const char* ps_last_error(void);
PS_API const char* ps_status_name(ps_status status);

/* Runs one experiment described by a JSON run config. */
PS_API ps_status ps_run_json(const char* config_json, ps_result** out);
PS_API void ps_result_free(ps_result* result);

PS_API const char* ps_result_summary(const ps_result* result);
PS_API size_t ps_result_metrics_count(const ps_result* result);
/* One JSON record per epoch; NULL when out of range. */
PS_API const char* ps_result_metrics_line(const ps_result* result, size_t i);
/* NULL for methods without pipeline parameters. */
PS_API const char* ps_result_pipeline(const ps_result* result);
PS_API const char* ps_result_params(const ps_result* result);
PS_API double ps_result_test_accuracy(const ps_result* result);
PS_API double ps_result_val_accuracy(const ps_result* result);

/* Writes metrics.jsonl, timing.jsonl, summary.json and, when present,
 * pipeline.json and params.json into dir (created if needed). */
PS_API ps_status ps_result_write(const ps_result* result, const char* dir);

/* configs_json: JSON array of run configs. */
PS_API ps_status ps_compare_json(const char* configs_json, char** table_json);

/* Generates a synthetic table (JSON synth spec) and writes it as CSV. */
PS_API ps_status ps_synth_csv(const char* spec_json, const char* path);

PS_API void ps_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif /* PREPSEARCH_PREPSEARCH_H_ */
