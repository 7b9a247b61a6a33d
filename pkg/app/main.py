from fastapi import FastAPI

from app.api.experiments import experiments_api

APP_DESCRIPTION = """
API симулятора облачно-граничной сети мониторинга стрелочных переводов:
запуск прогонов сценариев и просмотр сохраненных сводных отчетов.
"""

app = FastAPI(description=APP_DESCRIPTION)
app.include_router(experiments_api)
