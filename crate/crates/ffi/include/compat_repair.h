#ifndef COMPAT_REPAIR_H
#define COMPAT_REPAIR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

enum CrpStatus
#if __STDC_VERSION__ >= 202311L
  : int32_t
#endif // __STDC_VERSION__ >= 202311L
 {
  CRP_STATUS_OK = 0,
  CRP_STATUS_NULL_ARGUMENT = 1,
  CRP_STATUS_INVALID_UTF8 = 2,
  CRP_STATUS_PARSE_ERROR = 3,
  CRP_STATUS_KB_ERROR = 4,
  CRP_STATUS_CORPUS_ERROR = 5,
  CRP_STATUS_BACKEND_ERROR = 6,
  CRP_STATUS_INVALID_ARGUMENT = 7,
  CRP_STATUS_PANIC = 8,
};
#if __STDC_VERSION__ >= 202311L
typedef enum CrpStatus CrpStatus;
#else
typedef int32_t CrpStatus;
#endif // __STDC_VERSION__ >= 202311L

/**
 * Parsed layout document.
 */
typedef struct CrpDocument CrpDocument;

/**
 * Attribute knowledge base.
 */
typedef struct CrpKb CrpKb;

/**
 * Message of the last failed call on this thread; empty after a
 * successful call. Valid until the next call on the same thread.
 */
const char *crp_last_error_message(void);

/**
 * Loads a knowledge base from a JSON file.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` a valid pointer.
 */
CrpStatus crp_kb_load(const char *path, struct CrpKb **out);

/**
 * The knowledge base bundled with the library.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
CrpStatus crp_kb_load_default(struct CrpKb **out);

/**
 * # Safety
 * `kb` must come from a `crp_kb_load*` call and not be used afterwards.
 */
void crp_kb_free(struct CrpKb *kb);

/**
 * Parses a layout document.
 *
 * # Safety
 * `text` must be a nul-terminated string and `out` a valid pointer.
 */
CrpStatus crp_document_parse(const char *text, struct CrpDocument **out);

/**
 * Canonical text of a document.
 *
 * # Safety
 * `doc` must be a live handle and `out` a valid pointer.
 */
CrpStatus crp_document_canonical(const struct CrpDocument *doc, char **out);

/**
 * # Safety
 * `doc` must come from [`crp_document_parse`] and not be used afterwards.
 */
void crp_document_free(struct CrpDocument *doc);

/**
 * Renders a document at one API level; the result is the render state
 * as JSON.
 *
 * # Safety
 * `doc` and `kb` must be live handles and `out` a valid pointer.
 */
CrpStatus crp_render_json(const struct CrpDocument *doc,
                          const struct CrpKb *kb,
                          uint8_t level,
                          char **out);

/**
 * Repairs a bug of the bundled corpus once (run 0) with a scripted
 * backend and a logical clock. `script_json` is a script file's content,
 * or null for a backend with no replies. The result is JSON with the
 * outcome and its judgment.
 *
 * # Safety
 * `kb` must be a live handle, `bug_id` a nul-terminated string,
 * `script_json` null or a nul-terminated string and `out` a valid pointer.
 */
CrpStatus crp_repair_bug_json(const struct CrpKb *kb,
                              const char *bug_id,
                              const char *script_json,
                              uint64_t seed,
                              char **out);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void crp_string_free(char *s);

#endif  /* COMPAT_REPAIR_H */
