package com.vuldroid.application;

import android.content.Intent;
import android.os.Bundle;
import android.widget.TextView;

import androidx.appcompat.app.AppCompatActivity;

public class EmailViewer extends AppCompatActivity {

    @Override
    protected void onCreate(Bundle savedInstanceState) {
        super.onCreate(savedInstanceState);
        setContentView(R.layout.activity_email_viewer);

        String email = getSharedPreferences("account", MODE_PRIVATE).getString("email", "");
        TextView view = findViewById(R.id.emailText);
        view.setText(email);

        // implicit broadcast: any registered receiver can read the address
        Intent broadcast = new Intent("com.vuldroid.application.EMAIL_LOADED");
        broadcast.putExtra("email", email);
        sendBroadcast(broadcast);
    }
}
