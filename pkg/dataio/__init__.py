# Dataset ingestion and the toolkit's own file formats
