/*
 * mica.h - C interface to the interview engine, summaries, service and
 * study harness.
 *
 * Conventions:
 *   - Every fallible call returns mica_status. On failure, mica_last_error()
 *     and mica_last_error_code() describe the error for the calling thread.
 *   - Strings returned through `char **out` are heap-allocated UTF-8 and must
 *     be released with mica_string_free().
 *   - Input strings are NUL-terminated UTF-8 unless a length is taken.
 *   - Handles are opaque. A handle may be used from one thread at a time,
 *     except mica_service, which is internally synchronized.
 */

#ifndef MICA_H
#define MICA_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(MICA_BUILDING_LIBRARY)
#    define MICA_API __declspec(dllexport)
#  else
#    define MICA_API __declspec(dllimport)
#  endif
#else
#  define MICA_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mica_status {
    MICA_OK = 0,
    MICA_E_INVALID_ARGUMENT = 1,  /* null pointer or malformed option */
    MICA_E_SYNTAX = 2,            /* DSL text does not parse */
    MICA_E_INVALID_SCRIPT = 3,    /* parses but fails validation */
    MICA_E_IO = 4,                /* file or socket failure */
    MICA_E_SESSION_COMPLETE = 5,
    MICA_E_SESSION_INCOMPLETE = 6,
    MICA_E_REPLAY = 7,            /* recorded events disagree with the engine */
    MICA_E_INPUT = 8,             /* data rejected; see mica_last_error_code() */
    MICA_E_INTERNAL = 99
} mica_status;

typedef enum mica_format {
    MICA_FORMAT_TEXT = 0,
    MICA_FORMAT_JSON = 1
} mica_format;

typedef struct mica_script mica_script;
typedef struct mica_session mica_session;
typedef struct mica_service mica_service;

MICA_API const char *mica_version(void);
MICA_API const char *mica_status_name(mica_status status);

/* Message and machine-readable code (e.g. "DuplicateRosterId") of the last
 * failure on this thread; empty strings after a success. */
MICA_API const char *mica_last_error(void);
MICA_API const char *mica_last_error_code(void);

MICA_API void mica_string_free(char *s);

/* ---------------------------------------------------------------- scripts */

/* Parse DSL text. Duplicate ids are a parse error here. */
MICA_API mica_status mica_script_parse(const char *text, size_t len, mica_script **out);
MICA_API mica_status mica_script_load_file(const char *path, mica_script **out);
MICA_API void mica_script_free(mica_script *script);

/* Validate DSL text. `report_json` receives
 * {"accepted": bool, "errors": [{code, location, message}], "warnings": [...]};
 * a syntax error is reported as a single error with code "SyntaxError".
 * Returns MICA_OK whether or not the script is accepted. */
MICA_API mica_status mica_validate_text(const char *text, size_t len, char **report_json,
                                        int *accepted);

/* Canonical DSL text; parsing it yields an equal script. */
MICA_API mica_status mica_script_render(const mica_script *script, char **out);

/* Number of question nodes. */
MICA_API size_t mica_script_question_count(const mica_script *script);

/* --------------------------------------------------------------- sessions */

/* Start an interview. When `patient_id` is non-null the anonymized reference
 * is derived from it with `secret` (at least 16 bytes); otherwise it is 32
 * zeros. `prompt_json` receives the first prompt. Fails with
 * MICA_E_INVALID_SCRIPT if the script does not validate. */
MICA_API mica_status mica_session_start(const mica_script *script, const char *session_id,
                                        const char *patient_id, const char *secret,
                                        int64_t now_ms, mica_session **out, char **prompt_json);
MICA_API void mica_session_free(mica_session *session);

/* Submit one utterance. `step_json` receives
 * {state, prompt?, reject_reason?, interruption?, warning?}. */
MICA_API mica_status mica_session_submit(mica_session *session, const char *utterance,
                                         int64_t now_ms, char **step_json);

/* Help text for the current question (the prompt if none is defined). */
MICA_API mica_status mica_session_help(mica_session *session, int64_t now_ms, char **help_text);

MICA_API int mica_session_complete(const mica_session *session);

/* Session as JSONL event records, in the service's log format. */
MICA_API mica_status mica_session_events(const mica_session *session, char **jsonl);

/* Rebuild a session from JSONL event records and check that the engine
 * reproduces every recorded step. */
MICA_API mica_status mica_session_replay(const mica_script *script, const char *jsonl,
                                         mica_session **out);

/* Doctor summary of a completed session. */
MICA_API mica_status mica_session_summary(const mica_session *session, mica_format format,
                                          char **out);

/* Fill a prescription template from a completed session; the result is a
 * JSON draft {anon_ref, template_id, text, filled, missing, complete, status}. */
MICA_API mica_status mica_session_prescription(const mica_session *session, const char *template_text,
                                               char **draft_json);

/* --------------------------------------------------------------- harness */

/* Run `n` seeded personas. `threads` 0 means 1. */
MICA_API mica_status mica_simulate(const mica_script *script, const char *persona_json, uint32_t n,
                                   uint64_t seed, unsigned threads, mica_format format, char **out);

/* One roster id per line; output is the assignment JSON. */
MICA_API mica_status mica_trial_assign(const char *roster_text, uint64_t seed, char **assignment_json);

/* Trial report.
 *   assignment_json  output of mica_trial_assign
 *   surveys_jsonl    event log or bare survey lines (may be null)
 *   durations_csv    "id,ms" lines (may be null)
 *   age_bands        e.g. "<44,44..56,>56" (null for that default)
 *   trim             "3x" (factor × median, the default when null),
 *                    "cap:MS" or "none" */
MICA_API mica_status mica_trial_report(const char *assignment_json, const char *surveys_jsonl,
                                       const char *durations_csv, const char *age_bands,
                                       const char *trim, mica_format format, char **out);

/* ---------------------------------------------------------------- service */

/* Load every *.mica file in `script_dir` and open (or resume) the event
 * store at `store_path`. */
MICA_API mica_status mica_service_create(const char *script_dir, const char *store_path,
                                         const char *secret, mica_service **out);

/* Serve HTTP; blocks until mica_service_stop() is called from another thread. */
MICA_API mica_status mica_service_listen(mica_service *service, const char *host, int port);

/* Bind an ephemeral port and write it to `port`; serve with mica_service_listen_bound(). */
MICA_API mica_status mica_service_bind(mica_service *service, const char *host, int *port);
MICA_API mica_status mica_service_listen_bound(mica_service *service);

MICA_API void mica_service_stop(mica_service *service);
MICA_API void mica_service_free(mica_service *service);

#ifdef __cplusplus
}
#endif

#endif /* MICA_H */
