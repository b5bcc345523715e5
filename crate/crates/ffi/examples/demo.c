/* Build: cargo build -p sentixrl-ffi
 *        cc crates/ffi/examples/demo.c -Icrates/ffi/include \
 *           target/debug/libsentixrl_ffi.a -lpthread -ldl -lm -o demo */
#include <stdio.h>
#include "sentixrl.h"

static const char *SCRIPT =
    "[role_defaults]\n"
    "ded = \"SCENE: a kitchen\"\n"
    "gen = \"Emotion: sadness\"\n"
    "disc = \"ACCEPT\"\n";

static const char *CORPUS =
    "{\"conversation_id\":\"k\",\"turn_index\":0,\"speaker\":\"A\",\"text\":\"The cake is gone.\",\"label\":\"sad\"}\n"
    "{\"conversation_id\":\"k\",\"turn_index\":1,\"speaker\":\"B\",\"text\":\"I ate it.\",\"label\":\"neutral\"}\n";

int main(void) {
    SxLabelConfig *cfg = NULL;
    SxEngine *engine = NULL;
    char *traces = NULL, *report = NULL;
    int rc = 1;

    printf("sentixrl %s\n", sx_version());
    if (sx_label_config_unified(&cfg) != SX_STATUS_OK) goto fail;

    SxConsensus cf;
    if (sx_consensus_closed_form(0.7, 0.9, 0.2, 3, &cf) != SX_STATUS_OK) goto fail;
    printf("q = %.2f, P(outlier) = %.6f\n", cf.q, cf.p_outlier);

    if (sx_engine_new_mock(cfg, SCRIPT, NULL, &engine) != SX_STATUS_OK) goto fail;
    if (sx_engine_evaluate(engine, CORPUS, 2, &traces) != SX_STATUS_OK) goto fail;
    if (sx_report_from_traces(cfg, traces, &report) != SX_STATUS_OK) goto fail;
    printf("%s\n", report);
    rc = 0;
    goto done;

fail:
    fprintf(stderr, "error: %s\n", sx_last_error());
done:
    sx_string_free(report);
    sx_string_free(traces);
    sx_engine_free(engine);
    sx_label_config_free(cfg);
    return rc;
}
