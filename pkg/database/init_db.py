"""
Database initialization script for edit run records
"""

import sys

from .database import DEFAULT_DATABASE_URL, init_database


def create_tables(database_url: str = None):
    """Create all database tables"""
    print("🔄 Initializing database...")
    try:
        init_database(database_url)
        print("✅ Database tables created successfully!")
        print("📊 Tables created:")
        print("   - runs")
    except Exception as e:
        print(f"❌ Error creating database tables: {e}")
        raise


if __name__ == "__main__":
    create_tables(sys.argv[1] if len(sys.argv) > 1 else DEFAULT_DATABASE_URL)
