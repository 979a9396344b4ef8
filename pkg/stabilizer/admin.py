from django.contrib import admin
from .models import ExperimentRun, SweepPoint


class SweepPointInline(admin.TabularInline):
    model = SweepPoint
    extra = 0
    can_delete = False
    readonly_fields = ['position', 'parameter', 'value', 'status', 'margin', 'decay_rate', 'final_normalized_lyapunov', 'error_message']


@admin.register(ExperimentRun)
class ExperimentRunAdmin(admin.ModelAdmin):
    list_display = ['name', 'command', 'status', 'basis_size', 'margin', 'decay_rate', 'certificate_valid', 'started_at']
    list_filter = ['status', 'command', 'certificate_valid', 'started_at']
    search_fields = ['name', 'config_hash']
    readonly_fields = ['config_hash', 'config_text', 'started_at', 'error_message']
    inlines = [SweepPointInline]

    def has_add_permission(self, request):
        return False


@admin.register(SweepPoint)
class SweepPointAdmin(admin.ModelAdmin):
    list_display = ['run_name', 'parameter', 'value', 'status', 'margin', 'decay_rate', 'final_normalized_lyapunov']
    list_filter = ['status', 'parameter']
    search_fields = ['run__name', 'value']
    raw_id_fields = ['run']

    def run_name(self, obj):
        return obj.run.name
    run_name.short_description = 'Run'
    run_name.admin_order_field = 'run__name'

    def has_add_permission(self, request):
        return False


admin.site.site_header = "Boundary Feedback Stabilizer"
admin.site.site_title = "Stabilizer Admin"
admin.site.index_title = "Experiment runs"
