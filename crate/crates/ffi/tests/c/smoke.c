/* Minimal C consumer: build a mock pipeline, rank ten images, print the
 * order. Usage: smoke IMG0 ... IMG9 */
#include <stdio.h>
#include "vwsd.h"

int main(int argc, char **argv) {
    if (argc != 11) {
        fprintf(stderr, "need 10 images\n");
        return 2;
    }
    VwsdPipeline *p = NULL;
    const char *cfg = "backend = \"mock\"\nmock_dim = 32\nmock_resolution = 32\n"
                      "augmentation = \"single-view\"\ntiming = false\n";
    if (vwsd_pipeline_new_from_toml(cfg, &p) != VWSD_STATUS_OK) {
        fprintf(stderr, "%s\n", vwsd_last_error_message());
        return 1;
    }
    double scores[10];
    size_t order[10];
    enum VwsdStatus st = vwsd_predict(p, "bank", "river bank", (const char *const *)(argv + 1),
                                      vwsd_candidate_count(), scores, order);
    if (st != VWSD_STATUS_OK) {
        fprintf(stderr, "%s\n", vwsd_last_error_message());
        vwsd_pipeline_free(p);
        return 1;
    }
    for (size_t i = 0; i < 10; i++) {
        printf("%zu %.17g\n", order[i], scores[order[i]]);
    }
    st = vwsd_predict(p, "bank", "river bank", (const char *const *)(argv + 1), 3, scores, order);
    printf("short=%d\n", (int)st);
    vwsd_pipeline_free(p);
    return 0;
}
