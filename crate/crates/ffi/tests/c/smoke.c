#include <stdio.h>
#include <string.h>

#include "srkit.h"

int main(void) {
    SrkitFormat *fmt = NULL;
    SrkitRounding *rne = NULL;
    if (srkit_format_preset("binary16", &fmt) != SRKIT_STATUS_OK) return 1;
    if (srkit_rounding_parse("rne", &rne) != SRKIT_STATUS_OK) return 2;
    char buf[64];
    size_t needed = 0;
    uint32_t flags = 0;
    if (srkit_round_str(fmt, rne, NULL, "3.14159265358979", buf, sizeof buf, &needed, &flags) != SRKIT_STATUS_OK) return 3;
    printf("%s\n", buf);
    SrkitFormat *bad = NULL;
    if (srkit_format_preset("nope", &bad) != SRKIT_STATUS_UNKNOWN_FORMAT) return 4;
    srkit_last_error(buf, sizeof buf, &needed);
    printf("%s\n", buf);
    srkit_rounding_free(rne);
    srkit_format_free(fmt);
    return 0;
}
