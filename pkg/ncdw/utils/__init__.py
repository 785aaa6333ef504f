# Shared utilities: configuration, logging, output files and charts
