//! Every example doubles as a smoke test.

macro_rules! example {
    ($name:ident, $file:literal) => {
        #[path = $file]
        mod $name;
    };
}

example!(sql_execution, "../examples/sql_execution.rs");
example!(grammar_induction, "../examples/grammar_induction.rs");
example!(dataset_preparation, "../examples/dataset_preparation.rs");
example!(ner_gazetteer, "../examples/ner_gazetteer.rs");
example!(entity_linking, "../examples/entity_linking.rs");
example!(structured_decoding, "../examples/structured_decoding.rs");
example!(end_to_end_pipeline, "../examples/end_to_end_pipeline.rs");
example!(experiment_grid, "../examples/experiment_grid.rs");

#[test]
fn sql_execution_runs() {
    sql_execution::run_example().unwrap();
}

#[test]
fn grammar_induction_runs() {
    grammar_induction::run_example().unwrap();
}

#[test]
fn dataset_preparation_runs() {
    dataset_preparation::run_example().unwrap();
}

#[test]
fn ner_gazetteer_runs() {
    ner_gazetteer::run_example().unwrap();
}

#[test]
fn entity_linking_runs() {
    entity_linking::run_example().unwrap();
}

#[test]
fn structured_decoding_runs() {
    structured_decoding::run_example().unwrap();
}

#[test]
fn end_to_end_pipeline_runs() {
    end_to_end_pipeline::run_example().unwrap();
}

#[test]
fn experiment_grid_runs() {
    experiment_grid::run_example().unwrap();
}
