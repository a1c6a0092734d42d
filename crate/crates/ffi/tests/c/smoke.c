#include <math.h>
#include <stdio.h>
#include <string.h>

#include "genbound.h"

static int fail(const char *what) {
    const char *msg = gb_last_error();
    fprintf(stderr, "%s: %s\n", what, msg ? msg : "(no message)");
    return 1;
}

int main(void) {
    double probs[2] = {0.5, 0.5};
    GbPmf *p = NULL;
    if (gb_pmf_new(probs, 2, &p) != GB_STATUS_OK) return fail("pmf_new");

    double h = 0.0;
    if (gb_entropy(p, &h) != GB_STATUS_OK) return fail("entropy");
    if (fabs(h - log(2.0)) > 1e-12) return fail("entropy value");

    double hamming[4] = {0.0, 1.0, 1.0, 0.0};
    double rate = 0.0;
    if (gb_rate_distortion(p, hamming, 2, 2, 0.1, &rate) != GB_STATUS_OK) return fail("rd");
    double hd = -(0.1 * log(0.1) + 0.9 * log(0.9));
    if (fabs(rate - (log(2.0) - hd)) > 1e-5) return fail("rd value");

    GbBoundReport *r = NULL;
    if (gb_variable_size_bound(1.0, 0.5, 100, 0.1, 0.0, &r) != GB_STATUS_OK) return fail("bound");
    char *json = NULL;
    if (gb_bound_report_json(r, &json) != GB_STATUS_OK) return fail("json");
    if (strstr(json, "\"variable_size\"") == NULL) return fail("json content");
    gb_string_free(json);
    gb_bound_report_free(r);

    double bad[2] = {0.7, 0.7};
    GbPmf *q = NULL;
    if (gb_pmf_new(bad, 2, &q) != GB_STATUS_INVALID_DISTRIBUTION) return fail("expected invalid");
    if (gb_last_error() == NULL) return fail("missing message");

    gb_pmf_free(p);
    printf("ok %s\n", gb_version());
    return 0;
}
