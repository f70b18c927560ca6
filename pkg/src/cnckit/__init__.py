"""Analytics toolkit for City Nature Challenge style citizen-science data.

Subpackages cover ingestion, activity statistics, k-means user
classification, cohort retention, geospatial analyses, interaction-network
centralities, and a synthetic-community generator used as a test oracle.
"""

__version__ = "0.1.0"
