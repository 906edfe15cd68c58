#include <stdio.h>
#include <string.h>

#include "kevo.h"

#define CHECK(cond)                                                   \
    do {                                                              \
        if (!(cond)) {                                                \
            const char *e = kevo_last_error();                        \
            fprintf(stderr, "%s:%d: %s (%s)\n", __FILE__, __LINE__,   \
                    #cond, e ? e : "no error");                       \
            return 1;                                                 \
        }                                                             \
    } while (0)

int main(void) {
    double ref[3] = {1.0, 2.0, 4.0};
    double out[3] = {1.0, 2.001, 4.0};
    bool ok = false;
    double dev = 0.0;
    CHECK(kevo_check_correctness(out, ref, 3, 0.01, 1e-6, &ok, &dev) == KEVO_STATUS_OK);
    CHECK(ok);

    double speedups[4] = {1.0, 2.0, 1.5, 0.9};
    KevoSpeedupSummary s;
    CHECK(kevo_summarize_speedups(speedups, 4, &s) == KEVO_STATUS_OK);
    CHECK(s.total == 4 && s.success == 2 && s.max == 2.0);

    char *desc = NULL, *code = NULL;
    CHECK(kevo_extract_boxed("boxed {Use fma}\n```c\nint x;\n```\n", &desc, &code) == KEVO_STATUS_OK);
    CHECK(strcmp(desc, "Use fma") == 0 && strcmp(code, "int x;") == 0);
    kevo_string_free(desc);
    kevo_string_free(code);

    KevoPool *pool = NULL;
    CHECK(kevo_pool_from_json("{}", &pool) != KEVO_STATUS_OK);
    CHECK(pool == NULL && kevo_last_error() != NULL);

    printf("kevo %s ok\n", kevo_version());
    return 0;
}
