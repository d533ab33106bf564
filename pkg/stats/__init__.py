# -*- coding: utf-8 -*-
"""Метрики завершения и графики."""
