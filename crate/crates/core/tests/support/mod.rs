pub mod metrics_oracle;
